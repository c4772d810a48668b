#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedrl/mdp.hpp"
#include "fedrl/mixing.hpp"
#include "fedrl/policy_eval.hpp"

namespace fedrl {

inline constexpr double kTrackerMeanTol = 1e-9;

/// One reward table per agent over a shared state-action space.
struct MultiTaskRewards {
    std::vector<RewardTable> r_n;

    MultiTaskRewards() = default;
    explicit MultiTaskRewards(std::vector<RewardTable> tables);

    int n_agents() const { return static_cast<int>(r_n.size()); }
    /// Averaged table (1/N) sum_n r_n, the reward of the global objective.
    RewardTable averaged() const;
};

/// Synchronous-round snapshot of the federated system. Agent tables are laid
/// out with one row per agent and sa_index(s, a) columns.
struct FederatedState {
    int num_states = 0;
    int num_actions = 0;
    Matrix log_policies;  // N x (S*A), row n = log pi_n
    Matrix tracker;       // N x (S*A), global-Q estimates T
    Matrix last_q;        // N x (S*A), latest per-agent q estimates
    int iteration = 0;
    double last_eval_error = 0.0;  // worst reported evaluation bound this round

    int n_agents() const { return static_cast<int>(log_policies.rows()); }
    Policy policy_of(int agent) const;

    /// max_(s,a) |mean_n T(s,a) - mean_n q(s,a)|; zero up to fp for any
    /// doubly stochastic mixing.
    double tracker_mean_residual() const;
};

struct Diagnostics {
    bool consensus = false;
    bool omega = false;
    bool recursion = false;
};

struct RunConfig {
    double eta = 0.1;
    double tau = 0.0;
    int iterations = 0;
    MixingMatrix mixing;
    EvalMode eval_mode = EvalMode::exact();
    bool tracking = true;   // false runs the no-tracking ablation
    Diagnostics diagnostics;
    std::uint64_t seed = 0;

    RunConfig() : mixing(fully_connected(1)) {}
    explicit RunConfig(MixingMatrix w) : mixing(std::move(w)) {}
};

struct IterationMetrics {
    int iter = 0;
    double value = 0.0;                   // V^{pi_bar}(rho)
    std::optional<double> soft_value;     // V_tau^{pi_bar}(rho), tau > 0 only
    double gap = 0.0;                     // optimum minus current (soft) value
    double avg_gap = 0.0;                 // running average of gap
    std::optional<double> consensus_err;  // max_n ||log pi_n - log pi_bar||_inf
    std::optional<Eigen::Vector4d> omega; // Omega_1..4 (Omega_3/4 unset when tau = 0)
    double eval_err = 0.0;                // reported bound / realized eval error
};

struct RunResult {
    std::vector<IterationMetrics> metrics;
    double optimal_value = 0.0;           // V*(rho) or V*_tau(rho)
    double sigma = 0.0;
    double max_tracker_residual = 0.0;
    std::optional<double> max_recursion_violation;  // recursion diagnostic
    std::vector<std::string> warnings;
};

/// Uniform policies; trackers initialized to the per-agent q estimates.
FederatedState init_state(const TabularMdp& mdp, const MultiTaskRewards& rewards,
                          const RunConfig& config);

/// One synchronous round of vanilla FedNPG (tau = 0): gossip-mixed
/// multiplicative policy update driven by the trackers, fresh per-agent
/// evaluation of the new policies, then the Q-tracking correction.
FederatedState vanilla_step(const FederatedState& state, const TabularMdp& mdp,
                            const MultiTaskRewards& rewards, const RunConfig& config);

/// Entropy-regularized round; the tau = 0 path coincides with vanilla_step
/// bitwise.
FederatedState regularized_step(const FederatedState& state, const TabularMdp& mdp,
                                const MultiTaskRewards& rewards, const RunConfig& config);

/// Ablation: the tracker is replaced by a plain gossip mix of the current
/// local Q estimates (no correction term).
FederatedState no_tracking_step(const FederatedState& state, const TabularMdp& mdp,
                                const MultiTaskRewards& rewards, const RunConfig& config);

/// Normalized geometric mean of the agents' policies (arithmetic mean of the
/// log-policies followed by per-state normalization).
Policy average_policy(const FederatedState& state);

/// Auxiliary sequences xi / xi_bar used by the Omega error metrics. The
/// regularized initialization requires the soft optimum. Maintenance is
/// opt-in (Diagnostics::omega) because it costs an extra N x |S||A| matrix.
class OmegaTracker {
  public:
    OmegaTracker(const FederatedState& state, const TabularMdp& mdp, const RunConfig& config,
                 const SoftOptimum& opt);

    /// Advances xi / xi_bar using the pre-step tracker T^(t) and the exact
    /// mean soft-Q of the pre-step policies. Call once per round, before
    /// replacing the state.
    void advance(const FederatedState& state, const Matrix& exact_mean_q,
                 const RunConfig& config);

    /// (Omega_1, Omega_2, Omega_3, Omega_4) at the current round. Omega_3/4
    /// are NaN for tau = 0, where the error vector is two-dimensional.
    Eigen::Vector4d omega(const FederatedState& state, const TabularMdp& mdp,
                          const MultiTaskRewards& rewards, const RunConfig& config,
                          const Matrix& exact_mean_q) const;

  private:
    Matrix log_xi_;      // N x (S*A)
    Vector log_xi_bar_;  // S*A
    Matrix q_star_;      // soft optimum Q (tau > 0)
    double gamma_ = 0.0;
};

/// Exact (1/N) sum_n Q_{tau,n}^{pi_n}: ground truth for the diagnostics,
/// independent of the run's eval mode.
Matrix exact_mean_task_q(const FederatedState& state, const TabularMdp& mdp,
                         const MultiTaskRewards& rewards, const RunConfig& config);

/// Runs `iterations` rounds and records metrics at t = 0..iterations.
/// Diagnostics always evaluate the average policy exactly, regardless of the
/// eval mode driving the algorithm. Deterministic given config.seed.
RunResult run(const TabularMdp& mdp, const MultiTaskRewards& rewards,
              const StateDistribution& rho, const RunConfig& config);

// ---------------------------------------------------------------------------
// Analysis constants (error-recursion systems and learning-rate bounds)
// ---------------------------------------------------------------------------

struct RecursionParams {
    int n_agents = 1;
    double gamma = 0.9;
    double tau = 0.0;
    double eta = 0.1;
    double sigma = 0.0;
    int num_actions = 2;
};

enum class RecursionVariant { kRegularized, kVanilla };

/// Linear error-recursion system Omega^(t+1) <= matrix * Omega^(t) + offset:
/// the 4x4 regularized system (zero offset) or the 2x2 vanilla system.
struct RecursionSystem {
    Matrix matrix;
    Vector offset;
};

RecursionSystem recursion_matrix(const RecursionParams& params, RecursionVariant variant);

/// sup-norm Lipschitz constant of the soft Q-function in the logits:
/// gamma (1 + gamma + 2 tau (1-gamma) log|A|) / (1-gamma)^2.
double soft_q_lipschitz_constant(double gamma, double tau, int num_actions);

struct LearningRateBounds {
    double eta1_formal = 0.0;    // vanilla bound; +inf when sigma = 0
    double eta1_informal = 0.0;  // the looser headline form, exposed for reference
    double eta0 = 0.0;           // regularized bound min{(1-gamma)/tau, zeta}
    double zeta = 0.0;
};

LearningRateBounds learning_rate_bounds(const RecursionParams& params);

/// Amplification constant mapping a uniform policy-evaluation error to the
/// extra sub-optimality of inexact vanilla runs; used to size noise budgets.
double noise_amplification_vanilla(const RecursionParams& params);

/// Theoretical consensus-error ceiling for vanilla runs with uniform init
/// and eta <= eta1: 32 N sigma eta / (3 (1-gamma)^4 (1-sigma)).
double consensus_error_bound(const RecursionParams& params);

}  // namespace fedrl
