#pragma once

// Umbrella header for the library.

#include "wiener/clark_ocone.hpp"
#include "wiener/commands.hpp"
#include "wiener/config.hpp"
#include "wiener/errors.hpp"
#include "wiener/functionals.hpp"
#include "wiener/gaussian_calc.hpp"
#include "wiener/grid_paths.hpp"
#include "wiener/rng.hpp"
#include "wiener/stochastic_lab.hpp"
#include "wiener/validate.hpp"
#include "wiener/variational.hpp"
