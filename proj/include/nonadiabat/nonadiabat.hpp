#pragma once

// Umbrella header for the nonadiabat toolkit.

#include "nonadiabat/consistency.hpp"
#include "nonadiabat/core.hpp"
#include "nonadiabat/entropy.hpp"
#include "nonadiabat/errors.hpp"
#include "nonadiabat/kraus.hpp"
#include "nonadiabat/model.hpp"
#include "nonadiabat/rng.hpp"
#include "nonadiabat/runner.hpp"
#include "nonadiabat/scenario.hpp"
#include "nonadiabat/stats.hpp"
#include "nonadiabat/trajectory.hpp"
