#include "fedrl/fednpg.hpp"

#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>
#include <string>

#include "fedrl/rng.hpp"

namespace fedrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr std::uint64_t kEvalStreamTag = 0x6576616cULL;

// Per-agent evaluation of the agents' own policies under their own rewards.
// Streams are split per (agent, iteration) so rounds are reproducible under
// any schedule; noise/samples are fresh every iteration.
Matrix evaluate_agents(const FederatedState& state, const TabularMdp& mdp,
                       const MultiTaskRewards& rewards, const RunConfig& config, int iteration,
                       double* max_reported_error) {
    const int n = state.n_agents();
    Matrix q(n, state.num_states * state.num_actions);
    double worst = 0.0;
    for (int agent = 0; agent < n; ++agent) {
        RngStream rng = make_stream(config.seed, {kEvalStreamTag, static_cast<std::uint64_t>(agent),
                                                  static_cast<std::uint64_t>(iteration)});
        const EvalResult res = evaluate(config.eval_mode, mdp, state.policy_of(agent),
                                        rewards.r_n[agent], config.tau, rng);
        for (int s = 0; s < state.num_states; ++s)
            for (int a = 0; a < state.num_actions; ++a)
                q(agent, s * state.num_actions + a) = res.q(s, a);
        worst = std::max(worst, res.reported_error_bound);
    }
    if (max_reported_error) *max_reported_error = worst;
    return q;
}

// Row-normalizes mixed log-policies per state via max-shifted log-sum-exp.
void normalize_log_policies(Matrix& log_pi, int num_states, int num_actions) {
    for (int agent = 0; agent < log_pi.rows(); ++agent)
        for (int s = 0; s < num_states; ++s) {
            double shift = -kInf;
            for (int a = 0; a < num_actions; ++a)
                shift = std::max(shift, log_pi(agent, s * num_actions + a));
            double acc = 0.0;
            for (int a = 0; a < num_actions; ++a)
                acc += std::exp(log_pi(agent, s * num_actions + a) - shift);
            const double log_z = shift + std::log(acc);
            for (int a = 0; a < num_actions; ++a) log_pi(agent, s * num_actions + a) -= log_z;
        }
}

FederatedState step_common(const FederatedState& state, const TabularMdp& mdp,
                           const MultiTaskRewards& rewards, const RunConfig& config,
                           bool tracking) {
    const double gamma = mdp.discount();
    if (config.tau > 0.0 && config.eta > (1.0 - gamma) / config.tau + 1e-15)
        throw std::invalid_argument("fednpg step: eta exceeds (1-gamma)/tau");
    const double alpha = 1.0 - config.eta * config.tau / (1.0 - gamma);
    const Matrix& w = config.mixing.weights();

    FederatedState next = state;
    next.iteration = state.iteration + 1;

    // Policy update: mix alpha log pi + eta/(1-gamma) T, then normalize.
    Matrix pre_mix = alpha * state.log_policies + (config.eta / (1.0 - gamma)) * state.tracker;
    next.log_policies = w * pre_mix;
    normalize_log_policies(next.log_policies, state.num_states, state.num_actions);

    // Fresh evaluation of each agent's new policy, then the tracker update.
    next.last_q = evaluate_agents(next, mdp, rewards, config, next.iteration,
                                  &next.last_eval_error);
    if (tracking)
        next.tracker = w * (state.tracker + next.last_q - state.last_q);
    else
        next.tracker = w * next.last_q;
    return next;
}

}  // namespace

// ---------------------------------------------------------------------------
// State and rewards
// ---------------------------------------------------------------------------

MultiTaskRewards::MultiTaskRewards(std::vector<RewardTable> tables) : r_n(std::move(tables)) {
    if (r_n.empty()) throw std::invalid_argument("MultiTaskRewards: need at least one agent");
    for (const auto& table : r_n)
        if (table.r.rows() != r_n[0].r.rows() || table.r.cols() != r_n[0].r.cols())
            throw std::invalid_argument("MultiTaskRewards: all tables must share the S x A shape");
}

RewardTable MultiTaskRewards::averaged() const {
    Matrix avg = Matrix::Zero(r_n[0].r.rows(), r_n[0].r.cols());
    for (const auto& table : r_n) avg += table.r;
    avg /= static_cast<double>(r_n.size());
    return RewardTable(std::move(avg));
}

Policy FederatedState::policy_of(int agent) const {
    Policy p;
    p.log_prob = Matrix(num_states, num_actions);
    for (int s = 0; s < num_states; ++s)
        for (int a = 0; a < num_actions; ++a)
            p.log_prob(s, a) = log_policies(agent, s * num_actions + a);
    return p;
}

double FederatedState::tracker_mean_residual() const {
    const Eigen::RowVectorXd mean_t = tracker.colwise().mean();
    const Eigen::RowVectorXd mean_q = last_q.colwise().mean();
    return (mean_t - mean_q).lpNorm<Eigen::Infinity>();
}

FederatedState init_state(const TabularMdp& mdp, const MultiTaskRewards& rewards,
                          const RunConfig& config) {
    if (rewards.n_agents() != config.mixing.n_agents())
        throw std::invalid_argument("init_state: reward count must match the mixing matrix");
    FederatedState state;
    state.num_states = mdp.num_states();
    state.num_actions = mdp.num_actions();
    const int n = rewards.n_agents();
    const int sa = state.num_states * state.num_actions;
    state.log_policies =
        Matrix::Constant(n, sa, -std::log(static_cast<double>(state.num_actions)));
    state.iteration = 0;
    state.last_q = evaluate_agents(state, mdp, rewards, config, 0, &state.last_eval_error);
    state.tracker = state.last_q;  // T^(0) = Q^(0)
    return state;
}

FederatedState vanilla_step(const FederatedState& state, const TabularMdp& mdp,
                            const MultiTaskRewards& rewards, const RunConfig& config) {
    if (config.tau != 0.0) throw std::invalid_argument("vanilla_step: requires tau = 0");
    return step_common(state, mdp, rewards, config, /*tracking=*/true);
}

FederatedState regularized_step(const FederatedState& state, const TabularMdp& mdp,
                                const MultiTaskRewards& rewards, const RunConfig& config) {
    // tau = 0 falls through to the identical vanilla path (alpha = 1).
    return step_common(state, mdp, rewards, config, /*tracking=*/true);
}

FederatedState no_tracking_step(const FederatedState& state, const TabularMdp& mdp,
                                const MultiTaskRewards& rewards, const RunConfig& config) {
    return step_common(state, mdp, rewards, config, /*tracking=*/false);
}

Policy average_policy(const FederatedState& state) {
    const Eigen::RowVectorXd mean_log = state.log_policies.colwise().mean();
    Matrix theta(state.num_states, state.num_actions);
    for (int s = 0; s < state.num_states; ++s)
        for (int a = 0; a < state.num_actions; ++a)
            theta(s, a) = mean_log(s * state.num_actions + a);
    // Normalize in the log domain; rows of theta are mean log-probabilities.
    Policy p;
    p.log_prob = theta;
    const Vector z = log_sum_exp_rows(theta);
    p.log_prob.colwise() -= z;
    return p;
}

// ---------------------------------------------------------------------------
// Omega diagnostics
// ---------------------------------------------------------------------------

OmegaTracker::OmegaTracker(const FederatedState& state, const TabularMdp& mdp,
                           const RunConfig& config, const SoftOptimum& opt)
    : gamma_(mdp.discount()) {
    const int n = state.n_agents();
    const int S = state.num_states;
    const int A = state.num_actions;
    const int sa = S * A;
    const Policy avg = average_policy(state);

    // Per-state log of || exp(mean_n log pi(.|s)) ||_1.
    Matrix mean_log(S, A);
    const Eigen::RowVectorXd mean_row = state.log_policies.colwise().mean();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) mean_log(s, a) = mean_row(s * A + a);
    const Vector log_norm_mean = log_sum_exp_rows(mean_log);

    log_xi_ = Matrix(n, sa);
    log_xi_bar_ = Vector(sa);
    if (config.tau > 0.0) {
        q_star_ = opt.q_star;
        const Vector log_norm_qstar = log_sum_exp_rows(opt.q_star / config.tau);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const int col = s * A + a;
                const double shift = log_norm_qstar(s) - log_norm_mean(s);
                for (int agent = 0; agent < n; ++agent)
                    log_xi_(agent, col) = state.log_policies(agent, col) + shift;
                log_xi_bar_(col) = log_norm_qstar(s) + avg.log_prob(s, a);
            }
    } else {
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                const int col = s * A + a;
                for (int agent = 0; agent < n; ++agent)
                    log_xi_(agent, col) = state.log_policies(agent, col) - log_norm_mean(s);
                log_xi_bar_(col) = avg.log_prob(s, a);
            }
    }
}

void OmegaTracker::advance(const FederatedState& state, const Matrix& exact_mean_q,
                           const RunConfig& config) {
    const int S = state.num_states;
    const int A = state.num_actions;
    const Matrix& w = config.mixing.weights();
    Vector q_flat(S * A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) q_flat(s * A + a) = exact_mean_q(s, a);

    if (config.tau > 0.0) {
        const double alpha = 1.0 - config.eta * config.tau / (1.0 - gamma_);
        log_xi_ = w * (alpha * log_xi_ + ((1.0 - alpha) / config.tau) * state.tracker);
        log_xi_bar_ = alpha * log_xi_bar_ + ((1.0 - alpha) / config.tau) * q_flat;
    } else {
        const double scale = config.eta / (1.0 - gamma_);
        log_xi_ = w * (log_xi_ + scale * state.tracker);
        log_xi_bar_ = log_xi_bar_ + scale * q_flat;
    }
}

Matrix exact_mean_task_q(const FederatedState& state, const TabularMdp& mdp,
                         const MultiTaskRewards& rewards, const RunConfig& config) {
    const int S = state.num_states;
    const int A = state.num_actions;
    if (config.eval_mode.kind == EvalMode::Kind::kExact) {
        // last_q already holds the exact per-agent tables.
        const Eigen::RowVectorXd mean_q = state.last_q.colwise().mean();
        Matrix out(S, A);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) out(s, a) = mean_q(s * A + a);
        return out;
    }
    Matrix out = Matrix::Zero(S, A);
    for (int agent = 0; agent < state.n_agents(); ++agent) {
        const Policy pi = state.policy_of(agent);
        out += config.tau > 0.0 ? soft_q(mdp, pi, rewards.r_n[agent], config.tau)
                                : exact_q(mdp, pi, rewards.r_n[agent]);
    }
    return out / double(state.n_agents());
}

Eigen::Vector4d OmegaTracker::omega(const FederatedState& state, const TabularMdp& mdp,
                                    const MultiTaskRewards& rewards, const RunConfig& config,
                                    const Matrix& exact_mean_q) const {
    const int S = state.num_states;
    const int A = state.num_actions;
    const int sa = S * A;

    double omega1 = 0.0;
    double omega2 = 0.0;
    for (int col = 0; col < sa; ++col) {
        const double u = (log_xi_.col(col).array() - log_xi_bar_(col)).matrix().norm();
        omega1 = std::max(omega1, u);
        const double q_hat = exact_mean_q(col / A, col % A);
        const double v = (state.tracker.col(col).array() - q_hat).matrix().norm();
        omega2 = std::max(omega2, v);
    }

    Eigen::Vector4d out;
    out(0) = omega1;
    out(1) = omega2;
    if (config.tau > 0.0) {
        double omega3 = 0.0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                omega3 = std::max(omega3,
                                  std::abs(q_star_(s, a) - config.tau * log_xi_bar_(s * A + a)));
        const Matrix q_bar =
            soft_q(mdp, average_policy(state), rewards.averaged(), config.tau);
        double min_slack = kInf;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                min_slack =
                    std::min(min_slack, q_bar(s, a) - config.tau * log_xi_bar_(s * A + a));
        out(2) = omega3;
        out(3) = std::max(0.0, -min_slack);
    } else {
        out(2) = std::numeric_limits<double>::quiet_NaN();
        out(3) = std::numeric_limits<double>::quiet_NaN();
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run loop
// ---------------------------------------------------------------------------

RunResult run(const TabularMdp& mdp, const MultiTaskRewards& rewards,
              const StateDistribution& rho, const RunConfig& user_config) {
    RunConfig config = user_config;
    RunResult result;
    result.sigma = config.mixing.sigma();

    const double gamma = mdp.discount();
    if (config.tau > 0.0 && config.eta > (1.0 - gamma) / config.tau) {
        result.warnings.push_back("eta exceeds (1-gamma)/tau; clamped to the admissible maximum");
        config.eta = (1.0 - gamma) / config.tau;
    }
    if (!config.mixing.doubly_stochastic())
        result.warnings.push_back(
            "mixing matrix is not doubly stochastic; theory diagnostics disabled");

    const RewardTable r_avg = rewards.averaged();
    const SoftOptimum opt = optimal_values(mdp, r_avg, config.tau);
    result.optimal_value = rho.p.dot(opt.v_star);

    const bool theory_ok = config.mixing.doubly_stochastic();
    const bool want_omega = config.diagnostics.omega && theory_ok;
    const bool want_recursion = config.diagnostics.recursion && want_omega;

    FederatedState state = init_state(mdp, rewards, config);

    std::unique_ptr<OmegaTracker> aux;
    if (want_omega) aux = std::make_unique<OmegaTracker>(state, mdp, config, opt);

    RecursionSystem recursion;
    if (want_recursion) {
        RecursionParams params;
        params.n_agents = rewards.n_agents();
        params.gamma = gamma;
        params.tau = config.tau;
        params.eta = config.eta;
        params.sigma = result.sigma;
        params.num_actions = mdp.num_actions();
        recursion = recursion_matrix(params, config.tau > 0.0 ? RecursionVariant::kRegularized
                                                              : RecursionVariant::kVanilla);
        result.max_recursion_violation = 0.0;
    }

    double gap_sum = 0.0;
    Eigen::Vector4d prev_omega = Eigen::Vector4d::Zero();
    for (int t = 0; t <= config.iterations; ++t) {
        IterationMetrics m;
        m.iter = t;
        const Policy avg = average_policy(state);
        m.value = rho.p.dot(exact_v(mdp, avg, r_avg));
        if (config.tau > 0.0) m.soft_value = rho.p.dot(soft_v(mdp, avg, r_avg, config.tau));
        m.gap = result.optimal_value - (config.tau > 0.0 ? *m.soft_value : m.value);
        if (!std::isfinite(m.gap) || !std::isfinite(m.value))
            throw std::runtime_error("fednpg run: non-finite value at iteration " +
                                     std::to_string(t));
        if (m.gap < -1e-9)
            throw std::runtime_error("fednpg run: optimum dominated at iteration " +
                                     std::to_string(t) + " (bug)");
        gap_sum += m.gap;
        m.avg_gap = gap_sum / (t + 1);
        if (config.diagnostics.consensus) {
            double worst = 0.0;
            for (int agent = 0; agent < state.n_agents(); ++agent) {
                double err = 0.0;
                for (int s = 0; s < state.num_states; ++s)
                    for (int a = 0; a < state.num_actions; ++a)
                        err = std::max(err, std::abs(state.log_policies(agent,
                                                                        s * state.num_actions + a) -
                                                     avg.log_prob(s, a)));
                worst = std::max(worst, err);
            }
            m.consensus_err = worst;
        }
        m.eval_err = state.last_eval_error;

        Matrix mean_q;
        if (want_omega) {
            mean_q = exact_mean_task_q(state, mdp, rewards, config);
            m.omega = aux->omega(state, mdp, rewards, config, mean_q);
            if (want_recursion && t > 0) {
                const int dims = config.tau > 0.0 ? 4 : 2;
                Vector prev(dims), cur(dims);
                for (int i = 0; i < dims; ++i) {
                    prev(i) = prev_omega(i);
                    cur(i) = (*m.omega)(i);
                }
                const Vector bound = recursion.matrix * prev + recursion.offset;
                const double violation = (cur - bound).maxCoeff();
                result.max_recursion_violation =
                    std::max(*result.max_recursion_violation, violation);
            }
            prev_omega = *m.omega;
        }

        if (theory_ok)
            result.max_tracker_residual =
                std::max(result.max_tracker_residual, state.tracker_mean_residual());

        result.metrics.push_back(std::move(m));
        if (t == config.iterations) break;

        FederatedState next = config.tracking
                                  ? step_common(state, mdp, rewards, config, true)
                                  : no_tracking_step(state, mdp, rewards, config);
        if (want_omega) aux->advance(state, mean_q, config);
        state = std::move(next);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Analysis constants
// ---------------------------------------------------------------------------

double soft_q_lipschitz_constant(double gamma, double tau, int num_actions) {
    const double one_minus = 1.0 - gamma;
    return gamma * (1.0 + gamma + 2.0 * tau * one_minus * std::log(double(num_actions))) /
           (one_minus * one_minus);
}

RecursionSystem recursion_matrix(const RecursionParams& p, RecursionVariant variant) {
    const double gamma = p.gamma;
    const double one_minus = 1.0 - gamma;
    const double sigma = p.sigma;
    const double eta = p.eta;
    const double sqrt_n = std::sqrt(double(p.n_agents));
    RecursionSystem sys;
    if (variant == RecursionVariant::kVanilla) {
        const double j = 2.0 * (1.0 + gamma) * gamma * sqrt_n / (one_minus * one_minus);
        sys.matrix = Matrix(2, 2);
        sys.matrix << sigma, eta * sigma / one_minus,
            j * sigma,
            sigma * (1.0 + (1.0 + gamma) * gamma * sqrt_n * eta * sigma /
                               (one_minus * one_minus * one_minus));
        sys.offset = Vector(2);
        sys.offset << 0.0,
            (1.0 + gamma) * gamma * p.n_agents * sigma * eta /
                (one_minus * one_minus * one_minus * one_minus);
        return sys;
    }
    if (p.tau <= 0.0)
        throw std::invalid_argument("recursion_matrix: regularized variant requires tau > 0");
    const double m = soft_q_lipschitz_constant(gamma, p.tau, p.num_actions);
    const double alpha = 1.0 - eta * p.tau / one_minus;
    const double n = double(p.n_agents);
    const double s_const =
        m * sqrt_n * (2.0 * alpha + (1.0 - alpha) * std::sqrt(2.0 * n) +
                      (1.0 - alpha) / p.tau * sqrt_n * m);
    sys.matrix = Matrix(4, 4);
    sys.matrix << sigma * alpha, eta * sigma / one_minus, 0.0, 0.0,
        s_const * sigma, (1.0 + eta * m * sqrt_n / one_minus * sigma) * sigma,
        (2.0 + gamma) * eta * m * n / one_minus * sigma, gamma * eta * m * n / one_minus * sigma,
        (1.0 - alpha) * m, 0.0, (1.0 - alpha) * gamma + alpha, (1.0 - alpha) * gamma,
        (2.0 * gamma + eta * p.tau) / one_minus * m, 0.0, 0.0, alpha;
    sys.offset = Vector::Zero(4);
    return sys;
}

LearningRateBounds learning_rate_bounds(const RecursionParams& p) {
    LearningRateBounds bounds;
    const double gamma = p.gamma;
    const double one_minus = 1.0 - gamma;
    const double sigma = p.sigma;
    const double sqrt_n = std::sqrt(double(p.n_agents));
    const double cube = one_minus * one_minus * one_minus;

    if (sigma <= 0.0) {
        bounds.eta1_formal = kInf;
        bounds.eta1_informal = kInf;
    } else {
        bounds.eta1_formal = (1.0 - sigma) * (1.0 - sigma) * cube /
                             (8.0 * (1.0 + gamma) * gamma * sqrt_n * sigma * sigma);
        bounds.eta1_informal =
            (1.0 - sigma) * (1.0 - sigma) * cube / (16.0 * sqrt_n * sigma);
    }

    if (p.tau <= 0.0) {
        bounds.zeta = kInf;
        bounds.eta0 = kInf;
        return bounds;
    }
    const double m = soft_q_lipschitz_constant(gamma, p.tau, p.num_actions);
    const double s0 = m * sqrt_n * (2.0 + std::sqrt(2.0 * double(p.n_agents)) + m * sqrt_n / p.tau);
    const double c = m * double(p.n_agents) / one_minus;
    const double denom = 8.0 * (p.tau * s0 * sigma * sigma +
                                10.0 * m * c * sigma * sigma / one_minus +
                                (1.0 - sigma) * (1.0 - sigma) * p.tau * p.tau / 16.0);
    bounds.zeta = one_minus * (1.0 - sigma) * (1.0 - sigma) * p.tau / denom;
    bounds.eta0 = std::min(one_minus / p.tau, bounds.zeta);
    return bounds;
}

double noise_amplification_vanilla(const RecursionParams& p) {
    const double one_minus = 1.0 - p.gamma;
    const double sqrt_n = std::sqrt(double(p.n_agents));
    const double pow5 = std::pow(one_minus, 5.0);
    const double pow3 = one_minus * one_minus * one_minus;
    return 32.0 * sqrt_n * p.sigma * p.eta / (pow5 * (1.0 - p.sigma) * (1.0 - p.sigma)) *
               (p.eta * sqrt_n / pow3 + 1.0) +
           2.0 / (one_minus * one_minus);
}

double consensus_error_bound(const RecursionParams& p) {
    const double one_minus = 1.0 - p.gamma;
    return 32.0 * double(p.n_agents) * p.sigma * p.eta /
           (3.0 * std::pow(one_minus, 4.0) * (1.0 - p.sigma));
}

}  // namespace fedrl
