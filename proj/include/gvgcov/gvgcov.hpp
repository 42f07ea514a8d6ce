#pragma once

#include "balance.hpp"
#include "coverage.hpp"
#include "env.hpp"
#include "error.hpp"
#include "geometry.hpp"
#include "gvg.hpp"
#include "io.hpp"
#include "rng.hpp"
#include "scenario.hpp"
#include "sim.hpp"
