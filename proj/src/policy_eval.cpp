#include "fedrl/policy_eval.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace fedrl {

EvalMode EvalMode::noisy_exact(double eps) {
    if (!(eps >= 0.0) || !std::isfinite(eps))
        throw std::invalid_argument("EvalMode: eps_inf must be finite and nonnegative");
    EvalMode m;
    m.kind = Kind::kNoisyExact;
    m.eps_inf = eps;
    return m;
}

EvalMode EvalMode::model_based(int samples_per_sa) {
    if (samples_per_sa < 1)
        throw std::invalid_argument("EvalMode: samples_per_sa must be at least 1");
    EvalMode m;
    m.kind = Kind::kModelBased;
    m.samples_per_sa = samples_per_sa;
    return m;
}

EvalMode EvalMode::parse(const std::string& text) {
    if (text == "exact") return exact();
    if (text.rfind("noisy:", 0) == 0) return noisy_exact(std::stod(text.substr(6)));
    if (text.rfind("model:", 0) == 0) return model_based(std::stoi(text.substr(6)));
    throw std::invalid_argument("EvalMode: expected exact | noisy:EPS | model:M, got '" + text +
                                "'");
}

std::string EvalMode::to_string() const {
    switch (kind) {
        case Kind::kExact: return "exact";
        case Kind::kNoisyExact: return "noisy:" + std::to_string(eps_inf);
        case Kind::kModelBased: return "model:" + std::to_string(samples_per_sa);
    }
    return "exact";
}

namespace {

Matrix true_q(const TabularMdp& mdp, const Policy& policy, const RewardTable& reward, double tau,
              SolveBackend backend) {
    return tau > 0.0 ? soft_q(mdp, policy, reward, tau, backend)
                     : exact_q(mdp, policy, reward, backend);
}

// Empirical kernel from samples_per_sa next-state draws per (s,a).
TabularMdp empirical_model(const TabularMdp& mdp, int samples_per_sa, RngStream& rng) {
    const int S = mdp.num_states();
    const int A = mdp.num_actions();
    std::vector<Eigen::Triplet<double>> entries;
    std::vector<double> row(S);
    const SparseMatrix& P = mdp.transition();
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            std::fill(row.begin(), row.end(), 0.0);
            for (SparseMatrix::InnerIterator it(P, mdp.sa_index(s, a)); it; ++it)
                row[it.col()] = it.value();
            std::vector<int> counts(S, 0);
            for (int i = 0; i < samples_per_sa; ++i) ++counts[sample_categorical(rng, row)];
            for (int next = 0; next < S; ++next)
                if (counts[next] > 0)
                    entries.emplace_back(mdp.sa_index(s, a), next,
                                         double(counts[next]) / samples_per_sa);
        }
    SparseMatrix t(static_cast<Eigen::Index>(S) * A, S);
    t.setFromTriplets(entries.begin(), entries.end());
    return TabularMdp(S, A, std::move(t), mdp.discount());
}

}  // namespace

EvalResult evaluate(const EvalMode& mode, const TabularMdp& mdp, const Policy& policy,
                    const RewardTable& reward, double tau, RngStream& rng, SolveBackend backend) {
    if (tau < 0.0) throw std::invalid_argument("evaluate: tau must be nonnegative");
    switch (mode.kind) {
        case EvalMode::Kind::kExact:
            return EvalResult{true_q(mdp, policy, reward, tau, backend), 0.0};
        case EvalMode::Kind::kNoisyExact: {
            Matrix q = true_q(mdp, policy, reward, tau, backend);
            for (int s = 0; s < mdp.num_states(); ++s)
                for (int a = 0; a < mdp.num_actions(); ++a)
                    q(s, a) += uniform_range(rng, -mode.eps_inf, mode.eps_inf);
            return EvalResult{std::move(q), mode.eps_inf};
        }
        case EvalMode::Kind::kModelBased: {
            const TabularMdp hat = empirical_model(mdp, mode.samples_per_sa, rng);
            Matrix q = true_q(hat, policy, reward, tau, backend);
            const Matrix exact = true_q(mdp, policy, reward, tau, backend);
            const double realized = (q - exact).lpNorm<Eigen::Infinity>();
            return EvalResult{std::move(q), realized};
        }
    }
    throw std::logic_error("evaluate: unreachable");
}

}  // namespace fedrl
