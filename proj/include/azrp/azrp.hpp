#pragma once

// Umbrella header.

#include "config.hpp"
#include "csv.hpp"
#include "epsilon.hpp"
#include "fkg.hpp"
#include "generator.hpp"
#include "kernel.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "pattern.hpp"
#include "rates.hpp"
#include "rng.hpp"
#include "runner.hpp"
#include "simulate.hpp"
#include "spectral.hpp"
#include "statespace.hpp"
#include "variational.hpp"
