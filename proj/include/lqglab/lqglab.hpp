#pragma once

#include "errors.hpp"
#include "fractal_stats.hpp"
#include "gaussian_field.hpp"
#include "gmc_measure.hpp"
#include "grid.hpp"
#include "harness.hpp"
#include "io.hpp"
#include "lfpp_metric.hpp"
#include "mating_of_trees.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "stats.hpp"
