#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fedrl/fednpg.hpp"
#include "fedrl/mdp.hpp"
#include "fedrl/mixing.hpp"
#include "fedrl/rng.hpp"

namespace fedrl {

/// Feature map phi : S x A -> R^p with a verified bound ||phi(s,a)||_2 <= C_phi.
class FeatureMap {
  public:
    /// Validates the bound exhaustively; c_phi <= 0 means "use the max norm".
    FeatureMap(Matrix phi_table, int num_states, int num_actions, double c_phi = 0.0);

    static FeatureMap one_hot(int num_states, int num_actions);
    /// Seeded Gaussian features rescaled so the largest row norm equals c_phi.
    static FeatureMap random_projection(int num_states, int num_actions, int dim, double c_phi,
                                        std::uint64_t seed);

    int dim() const { return static_cast<int>(phi_.cols()); }
    int num_states() const { return num_states_; }
    int num_actions() const { return num_actions_; }
    double c_phi() const { return c_phi_; }

    Eigen::RowVectorXd phi(int s, int a) const { return phi_.row(s * num_actions_ + a); }
    const Matrix& table() const { return phi_; }  // (S*A) x p

    /// Feature covariance under a state-action distribution.
    Matrix covariance(const StateActionDistribution& nu) const;
    /// Smallest eigenvalue of the covariance (the mu of the critic analysis).
    double covariance_floor(const StateActionDistribution& nu) const;

  private:
    Matrix phi_;  // (S*A) x p
    int num_states_;
    int num_actions_;
    double c_phi_;
};

/// Log-linear policy f_xi(a|s) = softmax_a phi(s,a)^T xi.
Policy log_linear_policy(const Vector& xi, const FeatureMap& features);

struct CriticSample {
    int state = 0;
    int action = 0;
    double q_hat = 0.0;
};

/// Two-phase geometric sampler: draws (s,a) from the discounted state-action
/// visitation induced by nu and returns an unbiased estimate of Q^pi(s,a).
CriticSample q_sampler(const TabularMdp& mdp, const StateActionDistribution& nu,
                       const Policy& policy, const RewardTable& reward, RngStream& rng);

/// K SGD steps from w_0 = 0 on the sampled regression loss; returns the
/// average of w_1..w_K. Throws when the iterates blow past the divergence
/// guard (beta too large).
Vector critic_solve(const TabularMdp& mdp, const StateActionDistribution& nu,
                    const Policy& policy, const RewardTable& reward, const FeatureMap& features,
                    int iterations, double beta, RngStream& rng);

/// l(w, Q, dist) = sum_(s,a) dist(s,a) (w^T phi(s,a) - Q(s,a))^2.
double approximation_loss(const Vector& w, const Matrix& q_table,
                          const StateActionDistribution& dist, const FeatureMap& features);

/// Exact weighted-least-squares minimizer of the approximation loss under the
/// policy's visitation distribution; pseudo-inverse convention (eigenvalues
/// below 1e-12 dropped), so rank-deficient features yield the minimum-norm
/// solution.
Vector exact_critic_target(const TabularMdp& mdp, const StateActionDistribution& nu,
                           const Policy& policy, const RewardTable& reward,
                           const FeatureMap& features);

struct FedNacConfig {
    int actor_iterations = 100;
    int critic_iterations = 1000;
    double actor_lr = 0.1;
    /// <= 0 selects the default 1/(2 C_phi^2); the 1/(2 C_phi) variant from
    /// the critic theorem statement is available via default_critic_lr.
    double critic_lr = 0.0;
    StateActionDistribution nu;
    MixingMatrix mixing;
    std::uint64_t seed = 0;
    bool critic_diagnostics = true;  // exact per-round loss / eps_approx surrogates

    FedNacConfig() : mixing(fully_connected(1)) {}
    explicit FedNacConfig(MixingMatrix w) : mixing(std::move(w)) {}
};

enum class CriticLrConvention { kSquared, kTheoremStatement };

double default_critic_lr(const FeatureMap& features,
                         CriticLrConvention convention = CriticLrConvention::kSquared);

struct FedNacState {
    Matrix actor;         // N x p, rows xi_n
    Matrix critic_prev;   // N x p, w^(t-1); zero before the first round
    Matrix tracker_prev;  // N x p, h^(t-1); zero before the first round
    int iteration = 0;

    int n_agents() const { return static_cast<int>(actor.rows()); }
    double tracker_mean_residual(const Matrix& critic_now) const;
};

FedNacState init_fednac(const TabularMdp& mdp, const MultiTaskRewards& rewards,
                        const FeatureMap& features, const FedNacConfig& config);

/// One actor round: per-agent sampled critic solves on the agents' own
/// rewards and policies, gradient tracking of the critic parameters, then
/// the gossip-mixed natural actor update.
FedNacState fednac_step(const FedNacState& state, const TabularMdp& mdp,
                        const MultiTaskRewards& rewards, const FeatureMap& features,
                        const FedNacConfig& config);

struct FedNacMetrics {
    int iter = 0;
    double value = 0.0;               // V^{f_xi_bar}(rho), exact
    double gap = 0.0;                 // V*(rho) - value
    double actor_consensus = 0.0;     // ||xi - 1 xi_bar^T||_F
    double tracker_consensus = 0.0;   // ||h - 1 w_hat^T||_F
    std::optional<double> mean_critic_loss;
    std::optional<double> eps_approx_surrogate;
};

struct FedNacRunResult {
    std::vector<FedNacMetrics> metrics;
    double optimal_value = 0.0;
    double mu = 0.0;                        // covariance floor under nu
    std::optional<double> c_nu_bound;       // crude transfer-error bound, full-support nu only
    double max_tracker_residual = 0.0;
    std::vector<std::string> warnings;
};

/// Runs T actor rounds with exact per-round diagnostics of the average-
/// parameter policy. Deterministic given config.seed.
FedNacRunResult run_fednac(const TabularMdp& mdp, const MultiTaskRewards& rewards,
                           const FeatureMap& features, const StateDistribution& rho,
                           const FedNacConfig& config);

}  // namespace fedrl
