#pragma once

#include "lrf/baselines.hpp"
#include "lrf/core.hpp"
#include "lrf/error.hpp"
#include "lrf/eval.hpp"
#include "lrf/features.hpp"
#include "lrf/io.hpp"
#include "lrf/lbfgs.hpp"
#include "lrf/linalg.hpp"
#include "lrf/objective.hpp"
#include "lrf/pipeline.hpp"
#include "lrf/random.hpp"
#include "lrf/simgen.hpp"
#include "lrf/solver.hpp"
