#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <cmath>
#include <vector>

namespace fedrl {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Tolerances shared across the tabular-MDP layer.
inline constexpr double kDistributionTol = 1e-12;   // probability rows must sum to 1
inline constexpr double kPolicyRowTol = 1e-10;      // policy rows must normalize
inline constexpr double kValueIterTol = 1e-12;      // successive-iterate stopping rule

/// Finite MDP with a shared transition kernel. Transition rows are stored
/// sparsely, indexed by sa_index(s, a); rewards live outside this class so
/// multiple agents can share the dynamics.
class TabularMdp {
  public:
    TabularMdp(int num_states, int num_actions, SparseMatrix transition, double discount);

    /// Builds from nested tables p[s][a][s'].
    static TabularMdp from_tables(const std::vector<std::vector<std::vector<double>>>& p,
                                  double discount);

    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    double discount() const { return discount_; }
    int sa_index(int s, int a) const { return s * num_actions_ + a; }

    const SparseMatrix& transition() const { return transition_; }
    double transition_prob(int s, int a, int next) const { return transition_.coeff(sa_index(s, a), next); }

    /// Expected next-state value: (P v)(s,a) for every state-action pair,
    /// returned as an S x A table.
    Matrix next_state_values(const Vector& v) const;

  private:
    int num_states_;
    int num_actions_;
    SparseMatrix transition_;  // (S*A) x S, each row a probability vector
    double discount_;
};

/// Per-task reward table r[s][a] with entries in [0,1].
struct RewardTable {
    Matrix r;  // S x A

    RewardTable() = default;
    explicit RewardTable(Matrix values);
};

/// Row-stochastic policy stored in the log domain (NPG updates are
/// multiplicative, so the log representation is the native one).
/// -inf entries are legal and denote exactly-zero probabilities.
struct Policy {
    Matrix log_prob;  // S x A

    static Policy uniform(int num_states, int num_actions);
    static Policy from_log_table(Matrix log_values);  // validates normalization
    Matrix probs() const { return log_prob.array().exp(); }
    double prob(int s, int a) const { return std::exp(log_prob(s, a)); }

    void validate() const;
};

struct StateDistribution {
    Vector p;

    StateDistribution() = default;
    explicit StateDistribution(Vector values);
    static StateDistribution uniform(int num_states);
    static StateDistribution point_mass(int num_states, int s);
};

struct StateActionDistribution {
    Matrix p;  // S x A

    StateActionDistribution() = default;
    explicit StateActionDistribution(Matrix values);
    static StateActionDistribution uniform(int num_states, int num_actions);
};

/// Optimal values of the (possibly regularized) control problem. At tau = 0
/// these are the usual V*, Q*, and a greedy deterministic policy; at tau > 0
/// the soft optimum with its unique stochastic policy.
struct SoftOptimum {
    Vector v_star;
    Matrix q_star;
    Policy pi_star;
    double tau = 0.0;
};

enum class SolveBackend {
    kAuto,       // dense solve for small state spaces, iterative sweeps otherwise
    kDense,      // direct dense linear solve
    kIterative,  // fixed-point sweeps to kValueIterTol
};

/// Softmax of a logit table, computed with max-shifted log-sum-exp.
Policy policy_from_logits(const Matrix& theta);

/// Row-wise log-normalizer: log sum_a exp(x(s,a)), max-shifted.
Vector log_sum_exp_rows(const Matrix& x);

/// Policy-averaged transition matrix P_pi(s, s') = sum_a pi(a|s) P(s'|s,a).
Matrix policy_transition_matrix(const TabularMdp& mdp, const Policy& policy);

/// V^pi: solves (I - gamma P_pi) V = r_pi.
Vector exact_v(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward,
               SolveBackend backend = SolveBackend::kAuto);

/// Q^pi(s,a) = r(s,a) + gamma E_{s'}[V^pi(s')].
Matrix exact_q(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward,
               SolveBackend backend = SolveBackend::kAuto);

/// Entropy-regularized (soft) value function; tau = 0 reduces exactly to
/// exact_v. Zero-probability actions contribute 0 to the entropy bonus.
Vector soft_v(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward, double tau,
              SolveBackend backend = SolveBackend::kAuto);

/// Soft Q-function: Q_tau(s,a) = r(s,a) + gamma E_{s'}[V_tau(s')].
Matrix soft_q(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward, double tau,
              SolveBackend backend = SolveBackend::kAuto);

/// Discounted state visitation d(s) = (1-gamma) sum_t gamma^t P(s_t = s),
/// with s_0 ~ rho.
StateDistribution discounted_state_visitation(const TabularMdp& mdp, const Policy& policy,
                                              const StateDistribution& rho,
                                              SolveBackend backend = SolveBackend::kAuto);

/// Discounted state-action visitation with (s_0, a_0) ~ nu and subsequent
/// actions drawn from the policy.
StateActionDistribution state_action_visitation(const TabularMdp& mdp, const Policy& policy,
                                                const StateActionDistribution& nu,
                                                SolveBackend backend = SolveBackend::kAuto);

/// Optimal values by (soft) value iteration to kValueIterTol, with the
/// gamma-contraction iteration cap. Greedy ties break toward the lowest
/// action index.
SoftOptimum optimal_values(const TabularMdp& mdp, const RewardTable& reward, double tau);

/// Discounted entropy H(s, pi) accumulated along trajectories from s; obeys
/// V_tau(s) = V(s) + tau * H(s, pi).
double entropy_term(const TabularMdp& mdp, const Policy& policy, int s);

/// Residual of the performance-difference identity between two policies;
/// a numerical diagnostic, expected < 1e-9 on well-conditioned instances.
double performance_difference_check(const TabularMdp& mdp, const RewardTable& reward,
                                    const Policy& pi, const Policy& pi_prime,
                                    const StateDistribution& rho);

}  // namespace fedrl
