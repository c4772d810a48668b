#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "fedrl/mdp.hpp"

namespace fedrl {

inline constexpr double kStochasticTol = 1e-10;

/// Gossip weight matrix over N agents. Row stochasticity is mandatory (the
/// policy mixing step requires it); column stochasticity and symmetry are
/// detected at construction and gate the theory-checking diagnostics.
class MixingMatrix {
  public:
    explicit MixingMatrix(Matrix weights);

    int n_agents() const { return static_cast<int>(weights_.rows()); }
    const Matrix& weights() const { return weights_; }

    bool row_stochastic() const { return row_stochastic_; }
    bool col_stochastic() const { return col_stochastic_; }
    bool symmetric() const { return symmetric_; }
    bool doubly_stochastic() const { return row_stochastic_ && col_stochastic_; }

    /// sigma = ||W - (1/N) 11^T||_2, cached at construction.
    double sigma() const { return sigma_; }

  private:
    Matrix weights_;
    bool row_stochastic_ = false;
    bool col_stochastic_ = false;
    bool symmetric_ = false;
    double sigma_ = 0.0;
};

/// Largest singular value of W - (1/N) 11^T.
double spectral_radius(const Matrix& weights);

/// Checks the consensus contraction ||W x - mean(x) 1||_2 <=
/// sigma ||x - mean(x) 1||_2 + 1e-12 for doubly stochastic W.
bool contraction_check(const MixingMatrix& w, const Vector& x);

// Topology builders. All outputs are row stochastic; fully_connected and
// metropolis are doubly stochastic as well.
MixingMatrix fully_connected(int n);
MixingMatrix standard_ring(int n);
MixingMatrix k_neighbor_equal(int n, int k);
MixingMatrix k_neighbor_random_row_stochastic(int n, int k, std::uint64_t seed);
MixingMatrix metropolis_from_edges(int n, const std::vector<std::pair<int, int>>& edges);

}  // namespace fedrl
