#pragma once

#include <cstdint>
#include <string>

#include "fedrl/mdp.hpp"
#include "fedrl/rng.hpp"

namespace fedrl {

/// Policy-evaluation backend for the federated loops.
///
/// kExact returns the true (soft) Q-table. kNoisyExact perturbs every entry
/// with independent uniform noise in [-eps, eps], so ||q - Q||_inf <= eps
/// holds deterministically, matching the l-inf hypotheses of the inexact
/// convergence guarantees. kModelBased draws next-state samples per (s,a),
/// solves exactly in the empirical kernel, and reports the realized error,
/// which is computable at desk scale.
struct EvalMode {
    enum class Kind { kExact, kNoisyExact, kModelBased };

    Kind kind = Kind::kExact;
    double eps_inf = 0.0;        // kNoisyExact
    int samples_per_sa = 1;      // kModelBased

    static EvalMode exact() { return EvalMode{}; }
    static EvalMode noisy_exact(double eps);
    static EvalMode model_based(int samples_per_sa);

    /// Parses "exact" | "noisy:EPS" | "model:M" (the CLI flag grammar).
    static EvalMode parse(const std::string& text);
    std::string to_string() const;
};

struct EvalResult {
    Matrix q;                          // S x A estimate of Q (or Q_tau)
    double reported_error_bound = 0;   // eps for noisy mode, realized error for model-based
};

/// Evaluates the (soft, when tau > 0) Q-function of `policy` under `reward`.
/// Pure given the RNG stream; the stream is unused in exact mode.
EvalResult evaluate(const EvalMode& mode, const TabularMdp& mdp, const Policy& policy,
                    const RewardTable& reward, double tau, RngStream& rng,
                    SolveBackend backend = SolveBackend::kAuto);

}  // namespace fedrl
