#pragma once

#include "jiio/baselines.hpp"
#include "jiio/core/error.hpp"
#include "jiio/core/linalg.hpp"
#include "jiio/core/parallel.hpp"
#include "jiio/core/rng.hpp"
#include "jiio/core/tensor.hpp"
#include "jiio/harness/bench.hpp"
#include "jiio/harness/checkpoint.hpp"
#include "jiio/harness/config.hpp"
#include "jiio/harness/csv.hpp"
#include "jiio/harness/data.hpp"
#include "jiio/jiio.hpp"
#include "jiio/layer.hpp"
#include "jiio/outer.hpp"
#include "jiio/solvers.hpp"
#include "jiio/tasks/adversarial.hpp"
#include "jiio/tasks/data.hpp"
#include "jiio/tasks/generative.hpp"
#include "jiio/tasks/inverse.hpp"
#include "jiio/tasks/meta.hpp"
#include "jiio/tasks/metrics.hpp"
#include "jiio/tasks/training.hpp"
