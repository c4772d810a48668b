#pragma once

#include <cstdint>

#include "fedrl/fednpg.hpp"
#include "fedrl/mdp.hpp"

namespace fedrl {

struct RandomProblem {
    TabularMdp mdp;
    MultiTaskRewards rewards;
};

/// Seeded test-instance generator: Dirichlet(1,...,1) transition rows and
/// i.i.d. uniform [0,1] rewards per agent.
RandomProblem random_mdp(int num_states, int num_actions, int n_agents, double gamma,
                         std::uint64_t seed);

}  // namespace fedrl
