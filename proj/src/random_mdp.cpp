#include "fedrl/random_mdp.hpp"

#include <vector>

#include "fedrl/rng.hpp"

namespace fedrl {

RandomProblem random_mdp(int num_states, int num_actions, int n_agents, double gamma,
                         std::uint64_t seed) {
    RngStream transitions = make_stream(seed, {0});
    std::vector<Eigen::Triplet<double>> entries;
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a) {
            const std::vector<double> row = dirichlet_flat(transitions, num_states);
            for (int next = 0; next < num_states; ++next)
                entries.emplace_back(s * num_actions + a, next, row[next]);
        }
    SparseMatrix t(static_cast<Eigen::Index>(num_states) * num_actions, num_states);
    t.setFromTriplets(entries.begin(), entries.end());

    std::vector<RewardTable> tables;
    tables.reserve(n_agents);
    for (int n = 0; n < n_agents; ++n) {
        RngStream rewards = make_stream(seed, {1, static_cast<std::uint64_t>(n)});
        Matrix r(num_states, num_actions);
        for (int s = 0; s < num_states; ++s)
            for (int a = 0; a < num_actions; ++a) r(s, a) = uniform01(rewards);
        tables.emplace_back(std::move(r));
    }
    return RandomProblem{TabularMdp(num_states, num_actions, std::move(t), gamma),
                         MultiTaskRewards(std::move(tables))};
}

}  // namespace fedrl
