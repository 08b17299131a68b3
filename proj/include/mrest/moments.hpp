#pragma once

#include "mrest/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>

#include <optional>

namespace mrest {

struct CenteredData {
    Matrix x;  ///< n x p, column means removed
    Matrix y;  ///< n x m, column means removed
    Vector x_mean;
    Vector y_mean;
};

/// Removes column means from both blocks; the means are kept for intercept
/// reconstruction.
inline CenteredData center(const Matrix& x, const Matrix& y) {
    require(x.rows() == y.rows(), "x and y must have the same number of rows");
    require(x.rows() >= 2, "centering needs at least two observations");
    CenteredData out;
    out.x_mean = x.colwise().mean();
    out.y_mean = y.colwise().mean();
    out.x = x.rowwise() - out.x_mean.transpose();
    out.y = y.rowwise() - out.y_mean.transpose();
    return out;
}

/// Sample second-moment blocks of centered data, divisor n-1. Every fit in
/// this library runs off these, which also lets tests feed population Sigma
/// blocks straight into the estimators.
struct Moments {
    Index n = 0;
    Matrix sxx;  ///< p x p
    Matrix sxy;  ///< p x m
    Matrix syy;  ///< m x m

    Index p() const { return sxx.rows(); }
    Index m() const { return syy.rows(); }
};

inline Moments moments_from(const CenteredData& data) {
    Moments mom;
    mom.n = data.x.rows();
    const double denom = static_cast<double>(mom.n - 1);
    mom.sxx = data.x.transpose() * data.x / denom;
    mom.sxy = data.x.transpose() * data.y / denom;
    mom.syy = data.y.transpose() * data.y / denom;
    return mom;
}

/// Population moments: treat Sigma blocks as if they were sample moments
/// from an arbitrarily large sample.
inline Moments moments_from_population(const Matrix& sigma_xx, const Matrix& sigma_xy,
                                       const Matrix& sigma_yy) {
    Moments mom;
    mom.n = 0;  // population; rank limits from n do not apply
    mom.sxx = sigma_xx;
    mom.sxy = sigma_xy;
    mom.syy = sigma_yy;
    return mom;
}

/// PCA basis used to pre-reduce wide (p > n) data before fitting.
struct ReducedBasis {
    Matrix loadings;  ///< p x q, orthonormal columns
    int q = 0;
    double variance_explained = 0.0;
};

struct PrereducedData {
    ReducedBasis basis;
    Matrix scores;  ///< n x q, centered
};

/// Retains the leading q = min(n-1, p) principal components of centered x,
/// or fewer once the cumulative variance fraction reaches `variance_cap`.
inline PrereducedData pca_prereduce(const Matrix& x_centered, double variance_cap = 0.995) {
    const Index n = x_centered.rows();
    const Index p = x_centered.cols();
    require(n >= 2, "pre-reduction needs at least two observations");
    require(variance_cap > 0.0 && variance_cap <= 1.0, "variance cap must be in (0, 1]");

    // Eigendecompose the n x n Gram matrix; cheaper than p x p when p > n.
    const Matrix gram = x_centered * x_centered.transpose() / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
    if (eig.info() != Eigen::Success) throw std::runtime_error("pre-reduction eigensolver failed");

    const Index q_max = std::min<Index>(n - 1, p);
    const double total = std::max(eig.eigenvalues().sum(), 0.0);
    require(total > 0.0, "pre-reduction on zero-variance data");

    // Eigen returns ascending order; walk from the top.
    Index q = 0;
    double captured = 0.0;
    for (Index k = 0; k < q_max; ++k) {
        const double value = eig.eigenvalues()[n - 1 - k];
        if (value <= total * 1e-14) break;
        captured += value;
        ++q;
        if (captured / total >= variance_cap) break;
    }
    require(q >= 1, "pre-reduction retained no components");

    PrereducedData out;
    out.basis.q = static_cast<int>(q);
    out.basis.variance_explained = captured / total;
    out.basis.loadings.resize(p, q);
    out.scores.resize(n, q);
    for (Index k = 0; k < q; ++k) {
        const Index src = n - 1 - k;
        const double value = eig.eigenvalues()[src];
        const Vector u = eig.eigenvectors().col(src);
        // loading = X^T u / ||X^T u||; score = X loading
        Vector loading = x_centered.transpose() * u;
        loading /= std::sqrt(value * static_cast<double>(n - 1));
        // Deterministic sign: largest-magnitude loading entry positive.
        Index arg = 0;
        loading.cwiseAbs().maxCoeff(&arg);
        if (loading[arg] < 0.0) loading = -loading;
        out.basis.loadings.col(k) = loading;
        out.scores.col(k) = x_centered * loading;
    }
    return out;
}

}  // namespace mrest
