#pragma once

#include "mfg/rl/dqn.hpp"
#include "mfg/rl/iteration.hpp"
#include "mfg/rl/network.hpp"
#include "mfg/rl/optim.hpp"
