// Independent reference implementations used only as test oracles. These
// deliberately take different algorithmic routes from the library code they
// check.
#pragma once

#include "mrest/rng.hpp"
#include "mrest/types.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace oracle {

using mrest::Index;
using mrest::Matrix;
using mrest::Vector;

/// Classical NIPALS PLS2 with explicit X and Y deflation and the textbook
/// inner power iteration. Returns coefficient matrices for 0..ncomp
/// components; input must be centered.
inline std::vector<Matrix> nipals_pls2_path(Matrix x, Matrix y, int ncomp) {
    const Index n = x.rows();
    const Index p = x.cols();
    const Index m = y.cols();
    Matrix w_mat(p, ncomp), p_mat(p, ncomp), c_mat(m, ncomp);
    std::vector<Matrix> path(ncomp + 1, Matrix::Zero(p, m));
    for (int a = 0; a < ncomp; ++a) {
        Index start = 0;
        y.colwise().squaredNorm().maxCoeff(&start);
        Vector u = y.col(start);
        Vector t = Vector::Zero(n), t_old = Vector::Zero(n), w(p);
        for (int it = 0; it < 2000; ++it) {
            w = x.transpose() * u;
            w.normalize();
            t = x * w;
            const Vector c = (y.transpose() * t).normalized();
            u = y * c;
            if ((t - t_old).norm() <= 1e-14 * std::max(1.0, t.norm())) break;
            t_old = t;
        }
        const double tsq = t.squaredNorm();
        const Vector pvec = x.transpose() * t / tsq;
        const Vector creg = y.transpose() * t / tsq;
        x -= t * pvec.transpose();
        y -= t * creg.transpose();
        w_mat.col(a) = w;
        p_mat.col(a) = pvec;
        c_mat.col(a) = creg;
        const Matrix wa = w_mat.leftCols(a + 1);
        const Matrix pa = p_mat.leftCols(a + 1);
        const Matrix ca = c_mat.leftCols(a + 1);
        path[a + 1] = wa * (pa.transpose() * wa).inverse() * ca.transpose();
    }
    return path;
}

/// Brute-force minimizer of the envelope objective over 1-dimensional bases
/// of R^2, scanning the angle.
struct GridMin {
    double theta = 0.0;
    double value = 0.0;
    Vector direction;
};

inline GridMin envelope_grid_search_2d(const Matrix& m_mat, const Matrix& u_mat, int steps) {
    const Matrix ki = (m_mat + u_mat).inverse();
    GridMin best;
    best.value = std::numeric_limits<double>::infinity();
    for (int i = 0; i < steps; ++i) {
        const double theta = M_PI * i / steps;
        Vector g(2);
        g << std::cos(theta), std::sin(theta);
        const double value = std::log(g.dot(m_mat * g)) + std::log(g.dot(ki * g));
        if (value < best.value) {
            best.value = value;
            best.theta = theta;
            best.direction = g;
        }
    }
    return best;
}

/// Deterministic dense matrix of standard normals for fixtures.
inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
    mrest::Rng rng(seed);
    Matrix out(rows, cols);
    for (Index j = 0; j < cols; ++j)
        for (Index i = 0; i < rows; ++i) out(i, j) = rng.next_normal();
    return out;
}

/// Random symmetric positive definite matrix with unit-scale spectrum.
inline Matrix random_spd(Index p, std::uint64_t seed, double ridge = 0.5) {
    const Matrix g = random_matrix(p, p, seed);
    return g * g.transpose() / static_cast<double>(p) + ridge * Matrix::Identity(p, p);
}

}  // namespace oracle
