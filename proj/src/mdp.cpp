#include "fedrl/mdp.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseLU>
#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace fedrl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// States above this size use iterative sweeps under SolveBackend::kAuto.
constexpr int kDenseSolveLimit = 200;

bool use_dense(SolveBackend backend, int num_states) {
    switch (backend) {
        case SolveBackend::kDense: return true;
        case SolveBackend::kIterative: return false;
        case SolveBackend::kAuto: return num_states <= kDenseSolveLimit;
    }
    return true;
}

// Direct solve of (I - gamma P_pi) v = r_pi exploiting kernel sparsity;
// used by kAuto above the dense size limit.
Vector sparse_direct_policy_solve(const TabularMdp& mdp, const Matrix& probs, const Vector& r_pi) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const double gamma = mdp.discount();
    const SparseMatrix& P = mdp.transition();
    std::vector<Eigen::Triplet<double>> entries;
    entries.reserve(S + P.nonZeros());
    for (int s = 0; s < S; ++s) {
        entries.emplace_back(s, s, 1.0);
        for (int a = 0; a < A; ++a) {
            const double p = probs(s, a);
            if (p <= 0.0) continue;
            for (SparseMatrix::InnerIterator it(P, mdp.sa_index(s, a)); it; ++it)
                entries.emplace_back(s, static_cast<int>(it.col()), -gamma * p * it.value());
        }
    }
    Eigen::SparseMatrix<double> system(S, S);
    system.setFromTriplets(entries.begin(), entries.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> solver;
    solver.compute(system);
    if (solver.info() != Eigen::Success)
        throw std::runtime_error("policy evaluation: sparse factorization failed (internal error)");
    Vector v = solver.solve(r_pi);
    if (!v.allFinite())
        throw std::runtime_error("policy evaluation: singular linear system (internal error)");
    return v;
}

// Iteration budget for gamma-contracting fixed-point loops: enough sweeps to
// shrink any bounded residual below tol, plus headroom for fp noise.
int contraction_iteration_cap(double gamma, double tol) {
    if (gamma <= 0.0) return 4;
    const double cap = std::log(tol * (1.0 - gamma)) / std::log(gamma);
    return static_cast<int>(std::ceil(cap)) + 64;
}

// x * log(x) with the 0 log 0 := 0 convention.
double xlogx(double x) {
    return x > 0.0 ? x * std::log(x) : 0.0;
}

// Per-state expected adjusted reward sum_a pi(a|s) (r(s,a) - tau log pi(a|s)).
Vector policy_reward(const Policy& policy, const RewardTable& reward, double tau) {
    const int S = static_cast<int>(policy.log_prob.rows());
    const int A = static_cast<int>(policy.log_prob.cols());
    Vector r_pi = Vector::Zero(S);
    for (int s = 0; s < S; ++s) {
        double acc = 0.0;
        for (int a = 0; a < A; ++a) {
            const double p = std::exp(policy.log_prob(s, a));
            if (p <= 0.0) continue;
            acc += p * reward.r(s, a) - tau * xlogx(p);
        }
        r_pi(s) = acc;
    }
    return r_pi;
}

// One Bellman expectation sweep v' = r_pi + gamma P_pi v, using the sparse
// kernel directly (no P_pi is materialized).
Vector bellman_sweep(const TabularMdp& mdp, const Matrix& probs, const Vector& r_pi,
                     const Vector& v) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const SparseMatrix& P = mdp.transition();
    Vector out = r_pi;
    for (int s = 0; s < S; ++s) {
        double acc = 0.0;
        for (int a = 0; a < A; ++a) {
            const double p = probs(s, a);
            if (p <= 0.0) continue;
            double ev = 0.0;
            for (SparseMatrix::InnerIterator it(P, mdp.sa_index(s, a)); it; ++it)
                ev += it.value() * v(it.col());
            acc += p * ev;
        }
        out(s) += mdp.discount() * acc;
    }
    return out;
}

Vector solve_policy_values(const TabularMdp& mdp, const Policy& policy, const Vector& r_pi,
                           SolveBackend backend) {
    const int S = mdp.num_states();
    const double gamma = mdp.discount();
    if (use_dense(backend, S)) {
        const Matrix p_pi = policy_transition_matrix(mdp, policy);
        const Matrix system = Matrix::Identity(S, S) - gamma * p_pi;
        Vector v = system.partialPivLu().solve(r_pi);
        if (!v.allFinite())
            throw std::runtime_error("policy evaluation: singular linear system (internal error)");
        return v;
    }
    const Matrix probs = policy.probs();
    if (backend != SolveBackend::kIterative)
        return sparse_direct_policy_solve(mdp, probs, r_pi);
    Vector v = Vector::Zero(S);
    const int cap = contraction_iteration_cap(gamma, kValueIterTol);
    for (int it = 0; it < cap; ++it) {
        Vector next = bellman_sweep(mdp, probs, r_pi, v);
        const double change = (next - v).lpNorm<Eigen::Infinity>();
        v = std::move(next);
        if (change < kValueIterTol) return v;
    }
    throw std::runtime_error("policy evaluation: iterative solve did not converge (internal error)");
}

}  // namespace

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

TabularMdp::TabularMdp(int num_states, int num_actions, SparseMatrix transition, double discount)
    : num_states_(num_states), num_actions_(num_actions), transition_(std::move(transition)),
      discount_(discount) {
    if (num_states_ <= 0 || num_actions_ <= 0)
        throw std::invalid_argument("TabularMdp: state and action counts must be positive");
    if (!(discount_ >= 0.0 && discount_ < 1.0))
        throw std::invalid_argument("TabularMdp: discount must lie in [0,1)");
    if (transition_.rows() != static_cast<Eigen::Index>(num_states_) * num_actions_ ||
        transition_.cols() != num_states_)
        throw std::invalid_argument("TabularMdp: transition must be (S*A) x S");
    for (int row = 0; row < transition_.rows(); ++row) {
        double sum = 0.0;
        for (SparseMatrix::InnerIterator it(transition_, row); it; ++it) {
            if (it.value() < 0.0)
                throw std::invalid_argument("TabularMdp: negative transition probability");
            sum += it.value();
        }
        if (std::abs(sum - 1.0) > kDistributionTol)
            throw std::invalid_argument("TabularMdp: transition row " + std::to_string(row) +
                                        " does not sum to 1");
    }
}

TabularMdp TabularMdp::from_tables(const std::vector<std::vector<std::vector<double>>>& p,
                                   double discount) {
    const int S = static_cast<int>(p.size());
    if (S == 0) throw std::invalid_argument("TabularMdp: empty transition table");
    const int A = static_cast<int>(p[0].size());
    std::vector<Eigen::Triplet<double>> entries;
    for (int s = 0; s < S; ++s) {
        if (static_cast<int>(p[s].size()) != A)
            throw std::invalid_argument("TabularMdp: ragged action dimension");
        for (int a = 0; a < A; ++a) {
            if (static_cast<int>(p[s][a].size()) != S)
                throw std::invalid_argument("TabularMdp: ragged next-state dimension");
            for (int next = 0; next < S; ++next)
                if (p[s][a][next] != 0.0)
                    entries.emplace_back(s * A + a, next, p[s][a][next]);
        }
    }
    SparseMatrix t(static_cast<Eigen::Index>(S) * A, S);
    t.setFromTriplets(entries.begin(), entries.end());
    return TabularMdp(S, A, std::move(t), discount);
}

Matrix TabularMdp::next_state_values(const Vector& v) const {
    Matrix out(num_states_, num_actions_);
    for (int s = 0; s < num_states_; ++s)
        for (int a = 0; a < num_actions_; ++a) {
            double acc = 0.0;
            for (SparseMatrix::InnerIterator it(transition_, sa_index(s, a)); it; ++it)
                acc += it.value() * v(it.col());
            out(s, a) = acc;
        }
    return out;
}

RewardTable::RewardTable(Matrix values) : r(std::move(values)) {
    if ((r.array() < 0.0).any() || (r.array() > 1.0).any())
        throw std::invalid_argument("RewardTable: entries must lie in [0,1]");
}

Policy Policy::uniform(int num_states, int num_actions) {
    Policy p;
    p.log_prob = Matrix::Constant(num_states, num_actions, -std::log(double(num_actions)));
    return p;
}

Policy Policy::from_log_table(Matrix log_values) {
    Policy p;
    p.log_prob = std::move(log_values);
    p.validate();
    return p;
}

void Policy::validate() const {
    const int S = static_cast<int>(log_prob.rows());
    for (int s = 0; s < S; ++s) {
        double sum = 0.0;
        for (int a = 0; a < log_prob.cols(); ++a) {
            const double lp = log_prob(s, a);
            if (lp == kInf || std::isnan(lp))
                throw std::invalid_argument("Policy: +inf/NaN log-probability");
            sum += std::exp(lp);
        }
        if (std::abs(sum - 1.0) > kPolicyRowTol)
            throw std::invalid_argument("Policy: row " + std::to_string(s) +
                                        " does not normalize");
    }
}

StateDistribution::StateDistribution(Vector values) : p(std::move(values)) {
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > kDistributionTol)
        throw std::invalid_argument("StateDistribution: not a probability vector");
}

StateDistribution StateDistribution::uniform(int num_states) {
    return StateDistribution(Vector::Constant(num_states, 1.0 / num_states));
}

StateDistribution StateDistribution::point_mass(int num_states, int s) {
    Vector v = Vector::Zero(num_states);
    v(s) = 1.0;
    return StateDistribution(std::move(v));
}

StateActionDistribution::StateActionDistribution(Matrix values) : p(std::move(values)) {
    if ((p.array() < 0.0).any() || std::abs(p.sum() - 1.0) > kDistributionTol)
        throw std::invalid_argument("StateActionDistribution: not a probability table");
}

StateActionDistribution StateActionDistribution::uniform(int num_states, int num_actions) {
    return StateActionDistribution(
        Matrix::Constant(num_states, num_actions, 1.0 / (double(num_states) * num_actions)));
}

// ---------------------------------------------------------------------------
// Policies and evaluation
// ---------------------------------------------------------------------------

Vector log_sum_exp_rows(const Matrix& x) {
    const int S = static_cast<int>(x.rows());
    Vector out(S);
    for (int s = 0; s < S; ++s) {
        const double shift = x.row(s).maxCoeff();
        if (shift == -kInf) {
            out(s) = -kInf;
            continue;
        }
        double acc = 0.0;
        for (int a = 0; a < x.cols(); ++a) acc += std::exp(x(s, a) - shift);
        out(s) = shift + std::log(acc);
    }
    return out;
}

Policy policy_from_logits(const Matrix& theta) {
    if (!theta.allFinite()) throw std::invalid_argument("policy_from_logits: non-finite input");
    Policy p;
    p.log_prob = theta;
    const Vector z = log_sum_exp_rows(theta);
    p.log_prob.colwise() -= z;
    return p;
}

Matrix policy_transition_matrix(const TabularMdp& mdp, const Policy& policy) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    Matrix p_pi = Matrix::Zero(S, S);
    const SparseMatrix& P = mdp.transition();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double p = std::exp(policy.log_prob(s, a));
            if (p <= 0.0) continue;
            for (SparseMatrix::InnerIterator it(P, mdp.sa_index(s, a)); it; ++it)
                p_pi(s, it.col()) += p * it.value();
        }
    return p_pi;
}

Vector exact_v(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward,
               SolveBackend backend) {
    return solve_policy_values(mdp, policy, policy_reward(policy, reward, 0.0), backend);
}

Matrix exact_q(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward,
               SolveBackend backend) {
    const Vector v = exact_v(mdp, policy, reward, backend);
    return reward.r + mdp.discount() * mdp.next_state_values(v);
}

Vector soft_v(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward, double tau,
              SolveBackend backend) {
    if (tau < 0.0) throw std::invalid_argument("soft_v: tau must be nonnegative");
    return solve_policy_values(mdp, policy, policy_reward(policy, reward, tau), backend);
}

Matrix soft_q(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward, double tau,
              SolveBackend backend) {
    const Vector v = soft_v(mdp, policy, reward, tau, backend);
    return reward.r + mdp.discount() * mdp.next_state_values(v);
}

StateDistribution discounted_state_visitation(const TabularMdp& mdp, const Policy& policy,
                                              const StateDistribution& rho, SolveBackend backend) {
    const int S = mdp.num_states();
    const double gamma = mdp.discount();
    if (use_dense(backend, S)) {
        const Matrix p_pi = policy_transition_matrix(mdp, policy);
        const Matrix system = Matrix::Identity(S, S) - gamma * p_pi.transpose();
        Vector d = system.partialPivLu().solve((1.0 - gamma) * rho.p);
        StateDistribution out;
        out.p = std::move(d);
        return out;
    }
    // d <- (1-gamma) rho + gamma P_pi^T d, a gamma-contraction in l1.
    const Matrix p_pi = policy_transition_matrix(mdp, policy);
    Vector d = (1.0 - gamma) * rho.p;
    const int cap = contraction_iteration_cap(gamma, kValueIterTol);
    for (int it = 0; it < cap; ++it) {
        Vector next = (1.0 - gamma) * rho.p + gamma * (p_pi.transpose() * d);
        const double change = (next - d).lpNorm<Eigen::Infinity>();
        d = std::move(next);
        if (change < kValueIterTol) {
            StateDistribution out;
            out.p = std::move(d);
            return out;
        }
    }
    throw std::runtime_error("discounted_state_visitation: no convergence (internal error)");
}

StateActionDistribution state_action_visitation(const TabularMdp& mdp, const Policy& policy,
                                                const StateActionDistribution& nu,
                                                SolveBackend backend) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const int SA = S * A;
    const double gamma = mdp.discount();
    // State-action chain: (s,a) -> (s',a') with probability P(s'|s,a) pi(a'|s').
    Matrix chain = Matrix::Zero(SA, SA);
    const SparseMatrix& P = mdp.transition();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const int row = mdp.sa_index(s, a);
            for (SparseMatrix::InnerIterator it(P, row); it; ++it) {
                const int next = static_cast<int>(it.col());
                for (int a2 = 0; a2 < A; ++a2) {
                    const double p = std::exp(policy.log_prob(next, a2));
                    if (p > 0.0) chain(row, mdp.sa_index(next, a2)) += it.value() * p;
                }
            }
        }
    Vector nu_flat(SA);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) nu_flat(mdp.sa_index(s, a)) = nu.p(s, a);

    Vector d_flat;
    if (use_dense(backend, SA)) {
        const Matrix system = Matrix::Identity(SA, SA) - gamma * chain.transpose();
        d_flat = system.partialPivLu().solve((1.0 - gamma) * nu_flat);
    } else {
        d_flat = (1.0 - gamma) * nu_flat;
        const int cap = contraction_iteration_cap(gamma, kValueIterTol);
        bool converged = false;
        for (int it = 0; it < cap && !converged; ++it) {
            Vector next = (1.0 - gamma) * nu_flat + gamma * (chain.transpose() * d_flat);
            converged = (next - d_flat).lpNorm<Eigen::Infinity>() < kValueIterTol;
            d_flat = std::move(next);
        }
        if (!converged)
            throw std::runtime_error("state_action_visitation: no convergence (internal error)");
    }
    StateActionDistribution out;
    out.p = Matrix(S, A);
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) out.p(s, a) = d_flat(mdp.sa_index(s, a));
    return out;
}

SoftOptimum optimal_values(const TabularMdp& mdp, const RewardTable& reward, double tau) {
    if (tau < 0.0) throw std::invalid_argument("optimal_values: tau must be nonnegative");
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    const double gamma = mdp.discount();
    const int cap = contraction_iteration_cap(gamma, kValueIterTol);

    Matrix q = Matrix::Zero(S, A);
    Vector v = Vector::Zero(S);
    bool converged = false;
    for (int it = 0; it < cap && !converged; ++it) {
        if (tau == 0.0) {
            v = q.rowwise().maxCoeff();
        } else {
            v = tau * log_sum_exp_rows(q / tau);
        }
        Matrix next_q = reward.r + gamma * mdp.next_state_values(v);
        converged = (next_q - q).lpNorm<Eigen::Infinity>() < kValueIterTol;
        q = std::move(next_q);
    }
    if (!converged)
        throw std::runtime_error("optimal_values: value iteration hit the iteration cap (bug)");

    SoftOptimum opt;
    opt.tau = tau;
    if (tau == 0.0) {
        opt.v_star = q.rowwise().maxCoeff();
        Matrix log_pi = Matrix::Constant(S, A, -kInf);
        for (int s = 0; s < S; ++s) {
            int best = 0;
            for (int a = 1; a < A; ++a)
                if (q(s, a) > q(s, best)) best = a;  // ties keep the lowest index
            log_pi(s, best) = 0.0;
        }
        opt.pi_star.log_prob = std::move(log_pi);
    } else {
        opt.v_star = tau * log_sum_exp_rows(q / tau);
        // pi*(a|s) = exp((Q*(s,a) - V*(s)) / tau), already normalized.
        Matrix log_pi = (q.colwise() - opt.v_star) / tau;
        opt.pi_star.log_prob = std::move(log_pi);
    }
    opt.q_star = std::move(q);
    return opt;
}

double entropy_term(const TabularMdp& mdp, const Policy& policy, int s) {
    const StateDistribution d =
        discounted_state_visitation(mdp, policy, StateDistribution::point_mass(mdp.num_states(), s));
    double h = 0.0;
    for (int state = 0; state < mdp.num_states(); ++state) {
        double row_entropy = 0.0;
        for (int a = 0; a < mdp.num_actions(); ++a)
            row_entropy -= xlogx(std::exp(policy.log_prob(state, a)));
        h += d.p(state) * row_entropy;
    }
    return h / (1.0 - mdp.discount());
}

double performance_difference_check(const TabularMdp& mdp, const RewardTable& reward,
                                    const Policy& pi, const Policy& pi_prime,
                                    const StateDistribution& rho) {
    const Vector v_pi = exact_v(mdp, pi, reward);
    const Vector v_prime = exact_v(mdp, pi_prime, reward);
    const Matrix q_prime = exact_q(mdp, pi_prime, reward);
    const StateDistribution d = discounted_state_visitation(mdp, pi, rho);

    const double lhs = rho.p.dot(v_pi) - rho.p.dot(v_prime);
    double rhs = 0.0;
    for (int s = 0; s < mdp.num_states(); ++s) {
        double inner = 0.0;
        for (int a = 0; a < mdp.num_actions(); ++a)
            inner += q_prime(s, a) * (std::exp(pi.log_prob(s, a)) - std::exp(pi_prime.log_prob(s, a)));
        rhs += d.p(s) * inner;
    }
    rhs /= (1.0 - mdp.discount());
    return std::abs(lhs - rhs);
}

}  // namespace fedrl
