#pragma once

// Umbrella header.

#include "softctl/action_prior.hpp"
#include "softctl/errors.hpp"
#include "softctl/exact_inference.hpp"
#include "softctl/io.hpp"
#include "softctl/irl.hpp"
#include "softctl/learners.hpp"
#include "softctl/mdp.hpp"
#include "softctl/numerics.hpp"
#include "softctl/oracle.hpp"
#include "softctl/runner.hpp"
#include "softctl/soft_solver.hpp"
#include "softctl/table.hpp"
