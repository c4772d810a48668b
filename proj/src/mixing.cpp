#include "fedrl/mixing.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <cmath>
#include <stdexcept>

#include "fedrl/rng.hpp"

namespace fedrl {

MixingMatrix::MixingMatrix(Matrix weights) : weights_(std::move(weights)) {
    const int n = static_cast<int>(weights_.rows());
    if (n == 0 || weights_.cols() != n)
        throw std::invalid_argument("MixingMatrix: weights must be square and nonempty");
    if ((weights_.array() < 0.0).any() || (weights_.array() > 1.0).any())
        throw std::invalid_argument("MixingMatrix: entries must lie in [0,1]");

    row_stochastic_ = true;
    col_stochastic_ = true;
    for (int i = 0; i < n; ++i) {
        if (std::abs(weights_.row(i).sum() - 1.0) > kStochasticTol) row_stochastic_ = false;
        if (std::abs(weights_.col(i).sum() - 1.0) > kStochasticTol) col_stochastic_ = false;
    }
    if (!row_stochastic_)
        throw std::invalid_argument("MixingMatrix: rows must sum to 1 (policy mixing requires it)");
    symmetric_ = (weights_ - weights_.transpose()).lpNorm<Eigen::Infinity>() <= kStochasticTol;
    sigma_ = spectral_radius(weights_);
}

double spectral_radius(const Matrix& weights) {
    const int n = static_cast<int>(weights.rows());
    const Matrix centered = weights - Matrix::Constant(n, n, 1.0 / n);
    // N is small; a dense SVD is exact enough and simple.
    Eigen::JacobiSVD<Matrix> svd(centered);
    return svd.singularValues()(0);
}

bool contraction_check(const MixingMatrix& w, const Vector& x) {
    if (!w.doubly_stochastic())
        throw std::invalid_argument("contraction_check: requires a doubly stochastic matrix");
    const int n = w.n_agents();
    const double mean = x.mean();
    const Vector centered = x - Vector::Constant(n, mean);
    const double lhs = (w.weights() * x - Vector::Constant(n, mean)).norm();
    return lhs <= w.sigma() * centered.norm() + 1e-12;
}

MixingMatrix fully_connected(int n) {
    if (n <= 0) throw std::invalid_argument("fully_connected: n must be positive");
    return MixingMatrix(Matrix::Constant(n, n, 1.0 / n));
}

MixingMatrix standard_ring(int n) {
    if (n <= 0) throw std::invalid_argument("standard_ring: n must be positive");
    if (n == 1) return MixingMatrix(Matrix::Constant(1, 1, 1.0));
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i + 1 < n; ++i) {
        w(i, i) = 0.5;
        w(i, i + 1) = 0.5;
    }
    w(n - 1, n - 1) = 0.5;
    w(n - 1, 0) = 0.5;  // wrap-around edge
    return MixingMatrix(std::move(w));
}

MixingMatrix k_neighbor_equal(int n, int k) {
    if (n <= 0) throw std::invalid_argument("k_neighbor_equal: n must be positive");
    if (k < 1 || k >= n) throw std::invalid_argument("k_neighbor_equal: need 1 <= k < n");
    Matrix w = Matrix::Zero(n, n);
    const double weight = 1.0 / (k + 1);
    for (int i = 0; i < n; ++i) {
        w(i, i) = weight;
        for (int j = 1; j <= k; ++j) w(i, (i + j) % n) = weight;
    }
    return MixingMatrix(std::move(w));
}

MixingMatrix k_neighbor_random_row_stochastic(int n, int k, std::uint64_t seed) {
    if (n <= 0) throw std::invalid_argument("k_neighbor_random_row_stochastic: n must be positive");
    if (k < 1 || k >= n)
        throw std::invalid_argument("k_neighbor_random_row_stochastic: need 1 <= k < n");
    RngStream rng = make_stream(seed, {0x6b6e6569u});
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double total = 0.0;
        std::vector<double> draws(k + 1);
        for (double& d : draws) {
            d = uniform01(rng) + 1e-6;  // keep weights strictly positive
            total += d;
        }
        w(i, i) = draws[0] / total;
        for (int j = 1; j <= k; ++j) w(i, (i + j) % n) = draws[j] / total;
    }
    return MixingMatrix(std::move(w));
}

MixingMatrix metropolis_from_edges(int n, const std::vector<std::pair<int, int>>& edges) {
    if (n <= 0) throw std::invalid_argument("metropolis_from_edges: n must be positive");
    std::vector<int> degree(n, 0);
    Matrix adj = Matrix::Zero(n, n);
    for (const auto& [a, b] : edges) {
        if (a < 0 || b < 0 || a >= n || b >= n || a == b)
            throw std::invalid_argument("metropolis_from_edges: invalid edge");
        if (adj(a, b) != 0.0) continue;  // duplicate edge
        adj(a, b) = adj(b, a) = 1.0;
        ++degree[a];
        ++degree[b];
    }
    Matrix w = Matrix::Zero(n, n);
    for (int i = 0; i < n; ++i) {
        double off_diag = 0.0;
        for (int j = 0; j < n; ++j) {
            if (adj(i, j) == 0.0) continue;
            w(i, j) = 1.0 / (1.0 + std::max(degree[i], degree[j]));
            off_diag += w(i, j);
        }
        w(i, i) = 1.0 - off_diag;  // disconnected graphs are accepted; sigma may be 1
    }
    return MixingMatrix(std::move(w));
}

}  // namespace fedrl
