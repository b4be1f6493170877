#pragma once

// Umbrella header for the local Bayesian regression library.

#include "bandwidth.hpp"
#include "config.hpp"
#include "csv_io.hpp"
#include "dataset.hpp"
#include "hierarchical.hpp"
#include "kernel.hpp"
#include "level_model.hpp"
#include "linalg.hpp"
#include "linear_model.hpp"
#include "local_fit.hpp"
#include "mult_correction.hpp"
#include "multivariate.hpp"
#include "poisson_model.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "special.hpp"
#include "start_curve.hpp"
#include "util.hpp"
