#pragma once

#include <cstdint>
#include <vector>

#include "fedrl/fednpg.hpp"
#include "fedrl/mdp.hpp"

namespace fedrl {

struct GridCell {
    int row = 0;
    int col = 0;
    friend bool operator==(const GridCell&, const GridCell&) = default;
};

enum class AssignmentMode { kContiguous, kRoundRobin };

/// K x K multi-task grid: deterministic right/down dynamics shared by all
/// agents, per-agent rewards on the cells of a predetermined monotone path
/// from the top-left to the bottom-right corner.
struct GridWorldSpec {
    int grid_size = 2;
    int n_agents = 1;
    double gamma = 0.99;
    std::vector<GridCell> path;   // path[0] = (0,0), consecutive cells one right/down step apart
    std::vector<int> assignment;  // owner of path[i] for i >= 1; assignment[0] is ignored
    std::uint64_t seed = 0;

    void validate() const;
};

struct GridWorldProblem {
    TabularMdp mdp;
    MultiTaskRewards rewards;
    StateDistribution start;  // point mass at (0,0)
};

/// Monotone staircase path: right/down moves alternate with seeded jitter.
std::vector<GridCell> default_path(int grid_size, std::uint64_t seed);

/// Contiguous mode splits path[1..] into N nearly-equal consecutive segments
/// (remainder cells go to the earlier agents); round-robin cycles the agents
/// along the path. The seed is reserved for future randomized modes.
std::vector<int> default_assignment(const std::vector<GridCell>& path, int n_agents,
                                    AssignmentMode mode, std::uint64_t seed);

/// |S| = K^2, |A| = 2 (right, down). Off-border actions self-loop with reward
/// zero; r_n(s,a) = 1 exactly when the move lands on a cell owned by agent n.
GridWorldProblem build(const GridWorldSpec& spec);

/// Convenience: spec with the default path/assignment filled in.
GridWorldSpec default_gridworld(int grid_size, int n_agents, double gamma,
                                AssignmentMode mode = AssignmentMode::kContiguous,
                                std::uint64_t seed = 0);

}  // namespace fedrl
