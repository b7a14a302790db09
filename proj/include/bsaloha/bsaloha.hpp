#pragma once

#include "bsaloha/lambert_w.hpp"
#include "bsaloha/params.hpp"
#include "bsaloha/analytic.hpp"
#include "bsaloha/rng.hpp"
#include "bsaloha/sim.hpp"
#include "bsaloha/stats.hpp"
#include "bsaloha/experiment.hpp"
