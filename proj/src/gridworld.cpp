#include "fedrl/gridworld.hpp"

#include <stdexcept>
#include <string>

#include "fedrl/rng.hpp"

namespace fedrl {

namespace {

constexpr int kActionRight = 0;
constexpr int kActionDown = 1;

int cell_index(const GridCell& c, int grid_size) { return c.row * grid_size + c.col; }

}  // namespace

void GridWorldSpec::validate() const {
    if (grid_size < 2) throw std::invalid_argument("GridWorldSpec: grid_size must be at least 2");
    if (n_agents < 1) throw std::invalid_argument("GridWorldSpec: n_agents must be at least 1");
    if (!(gamma >= 0.0 && gamma < 1.0))
        throw std::invalid_argument("GridWorldSpec: gamma must lie in [0,1)");
    if (path.empty() || !(path.front() == GridCell{0, 0}))
        throw std::invalid_argument("GridWorldSpec: path must start at (0,0)");
    if (!(path.back() == GridCell{grid_size - 1, grid_size - 1}))
        throw std::invalid_argument("GridWorldSpec: path must end at the bottom-right corner");
    for (std::size_t i = 1; i < path.size(); ++i) {
        const GridCell& prev = path[i - 1];
        const GridCell& cur = path[i];
        const bool right = cur.row == prev.row && cur.col == prev.col + 1;
        const bool down = cur.row == prev.row + 1 && cur.col == prev.col;
        if (!right && !down)
            throw std::invalid_argument("GridWorldSpec: path step " + std::to_string(i) +
                                        " is not a single right/down move");
        if (cur.row >= grid_size || cur.col >= grid_size)
            throw std::invalid_argument("GridWorldSpec: path leaves the grid");
    }
    if (assignment.size() != path.size())
        throw std::invalid_argument("GridWorldSpec: assignment must cover every path cell");
    for (std::size_t i = 1; i < assignment.size(); ++i)
        if (assignment[i] < 0 || assignment[i] >= n_agents)
            throw std::invalid_argument("GridWorldSpec: assignment owner out of range");
}

std::vector<GridCell> default_path(int grid_size, std::uint64_t seed) {
    if (grid_size < 2) throw std::invalid_argument("default_path: grid_size must be at least 2");
    RngStream rng = make_stream(seed, {0x70617468u});
    std::vector<GridCell> path{{0, 0}};
    GridCell cur{0, 0};
    bool last_was_right = uniform01(rng) < 0.5;
    while (cur.row < grid_size - 1 || cur.col < grid_size - 1) {
        const bool can_right = cur.col < grid_size - 1;
        const bool can_down = cur.row < grid_size - 1;
        bool go_right;
        if (!can_right) {
            go_right = false;
        } else if (!can_down) {
            go_right = true;
        } else {
            // Staircase bias: usually alternate, occasionally repeat.
            go_right = (uniform01(rng) < 0.3) ? last_was_right : !last_was_right;
        }
        if (go_right)
            ++cur.col;
        else
            ++cur.row;
        last_was_right = go_right;
        path.push_back(cur);
    }
    return path;
}

std::vector<int> default_assignment(const std::vector<GridCell>& path, int n_agents,
                                    AssignmentMode mode, std::uint64_t /*seed*/) {
    if (n_agents < 1) throw std::invalid_argument("default_assignment: n_agents must be positive");
    if (path.size() < 2) throw std::invalid_argument("default_assignment: path too short");
    const int cells = static_cast<int>(path.size()) - 1;  // start cell is unassigned
    std::vector<int> owner(path.size(), -1);
    if (mode == AssignmentMode::kRoundRobin) {
        for (int i = 0; i < cells; ++i) owner[i + 1] = i % n_agents;
        return owner;
    }
    // Contiguous: nearly equal consecutive segments, remainder to earlier agents.
    const int base = cells / n_agents;
    const int extra = cells % n_agents;
    int idx = 1;
    for (int agent = 0; agent < n_agents; ++agent) {
        const int size = base + (agent < extra ? 1 : 0);
        for (int j = 0; j < size; ++j) owner[idx++] = agent;
    }
    return owner;
}

GridWorldProblem build(const GridWorldSpec& spec) {
    spec.validate();
    const int K = spec.grid_size;
    const int S = K * K;
    const int A = 2;

    // Owner lookup by destination cell; -1 marks off-path cells.
    std::vector<int> owner_of_cell(S, -1);
    for (std::size_t i = 1; i < spec.path.size(); ++i)
        owner_of_cell[cell_index(spec.path[i], K)] = spec.assignment[i];

    std::vector<Eigen::Triplet<double>> entries;
    std::vector<Matrix> reward_tables(spec.n_agents, Matrix::Zero(S, A));
    for (int row = 0; row < K; ++row)
        for (int col = 0; col < K; ++col) {
            const int s = row * K + col;
            for (int a = 0; a < A; ++a) {
                const bool off_border = (a == kActionRight) ? (col + 1 >= K) : (row + 1 >= K);
                int dest = s;
                if (!off_border)
                    dest = (a == kActionRight) ? s + 1 : s + K;
                entries.emplace_back(s * A + a, dest, 1.0);
                if (!off_border && owner_of_cell[dest] >= 0)
                    reward_tables[owner_of_cell[dest]](s, a) = 1.0;
            }
        }
    SparseMatrix t(static_cast<Eigen::Index>(S) * A, S);
    t.setFromTriplets(entries.begin(), entries.end());

    std::vector<RewardTable> rewards;
    rewards.reserve(spec.n_agents);
    for (auto& table : reward_tables) rewards.emplace_back(std::move(table));

    return GridWorldProblem{TabularMdp(S, A, std::move(t), spec.gamma),
                            MultiTaskRewards(std::move(rewards)),
                            StateDistribution::point_mass(S, 0)};
}

GridWorldSpec default_gridworld(int grid_size, int n_agents, double gamma, AssignmentMode mode,
                                std::uint64_t seed) {
    GridWorldSpec spec;
    spec.grid_size = grid_size;
    spec.n_agents = n_agents;
    spec.gamma = gamma;
    spec.seed = seed;
    spec.path = default_path(grid_size, seed);
    spec.assignment = default_assignment(spec.path, n_agents, mode, seed);
    return spec;
}

}  // namespace fedrl
