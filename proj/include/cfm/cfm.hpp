#pragma once

#include "cfm/baseline.hpp"
#include "cfm/config.hpp"
#include "cfm/data.hpp"
#include "cfm/errors.hpp"
#include "cfm/estimands.hpp"
#include "cfm/evaluation.hpp"
#include "cfm/gibbs.hpp"
#include "cfm/linalg.hpp"
#include "cfm/matching.hpp"
#include "cfm/mgp.hpp"
#include "cfm/psb.hpp"
#include "cfm/random.hpp"
#include "cfm/simulation.hpp"
#include "cfm/state.hpp"
