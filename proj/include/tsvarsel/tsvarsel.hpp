#pragma once

// Umbrella header.
#include "tsvarsel/core.hpp"
#include "tsvarsel/io.hpp"
#include "tsvarsel/kernel.hpp"
#include "tsvarsel/mmd.hpp"
#include "tsvarsel/optimize.hpp"
#include "tsvarsel/rng.hpp"
#include "tsvarsel/select.hpp"
#include "tsvarsel/stats.hpp"
#include "tsvarsel/synth.hpp"
#include "tsvarsel/threshold.hpp"
#include "tsvarsel/timeslice.hpp"
#include "tsvarsel/trajectory.hpp"
