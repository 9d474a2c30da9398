#pragma once

#include "mechanotaxis/errors.hpp"
#include "mechanotaxis/grid.hpp"
#include "mechanotaxis/velocity_law.hpp"
#include "mechanotaxis/signal.hpp"
#include "mechanotaxis/diagnostics.hpp"
#include "mechanotaxis/fv_solver.hpp"
#include "mechanotaxis/stability.hpp"
#include "mechanotaxis/steady_state.hpp"
#include "mechanotaxis/kinetic.hpp"
