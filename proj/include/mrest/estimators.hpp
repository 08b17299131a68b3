#pragma once

#include "mrest/envelope.hpp"
#include "mrest/moments.hpp"
#include "mrest/simulation.hpp"

#include <Eigen/Eigenvalues>

#include <optional>
#include <vector>

namespace mrest {

/// beta = Sxx^-1 Sxy through a dense Cholesky factorization. Rejects
/// singular Sxx; callers with wide data must pre-reduce first.
inline Matrix fit_ols(const Moments& mom) {
    Eigen::LLT<Matrix> llt(mom.sxx);
    bool ok = llt.info() == Eigen::Success;
    if (ok) {
        const Vector diag = Matrix(llt.matrixL()).diagonal();
        const double lo = diag.minCoeff();
        const double hi = diag.maxCoeff();
        ok = lo > 0.0 && (lo / hi) * (lo / hi) > 1e-13;
    }
    require(ok, "singular predictor covariance in least squares");
    return llt.solve(mom.sxy);
}

/// One method's coefficient matrices over l = 0..lmax, in the original
/// predictor coordinates (back-projected when the fit ran pre-reduced).
/// coef[0] is the null model.
struct CoefficientPath {
    Method method = Method::Pcr;
    int lmax = 10;
    std::vector<Matrix> coef;
    std::vector<Vector> intercept;
    std::optional<ReducedBasis> prereduction;
    std::vector<char> failed;     ///< per-l fit failure flags
    int senv_response_dim = 0;    ///< echo of d for Senv fits
    int truncated_at = -1;        ///< first l whose fit repeats the previous one
};

namespace detail {

struct PathCore {
    std::vector<Matrix> coef;  ///< l = 0..lmax in the fitted (possibly reduced) coordinates
    std::vector<char> failed;
    int truncated_at = -1;
};

inline PathCore make_core(Index p, Index m, int lmax) {
    PathCore core;
    core.coef.assign(lmax + 1, Matrix::Zero(p, m));
    core.failed.assign(lmax + 1, 0);
    return core;
}

/// Principal components regression: regress on the leading eigenvectors of
/// Sxx, accumulating one component per step.
inline PathCore pcr_path(const Moments& mom, int lmax) {
    const Index p = mom.p();
    const Index m = mom.m();
    PathCore core = make_core(p, m, lmax);

    Eigen::SelfAdjointEigenSolver<Matrix> eig(mom.sxx);
    if (eig.info() != Eigen::Success) throw std::runtime_error("PCR eigendecomposition failed");
    const double top = eig.eigenvalues().maxCoeff();
    require(top > 0.0, "PCR on zero-variance predictors");

    Matrix beta = Matrix::Zero(p, m);
    int l = 1;
    for (; l <= lmax; ++l) {
        const Index src = p - l;  // descending walk over ascending storage
        if (src < 0) break;
        const double value = eig.eigenvalues()[src];
        if (value <= top * 1e-12) break;  // beyond numerical rank
        const Vector v = eig.eigenvectors().col(src);
        beta.noalias() += v * (v.transpose() * mom.sxy) / value;
        core.coef[l] = beta;
    }
    for (; l <= lmax; ++l) {
        core.coef[l] = beta;
        if (core.truncated_at < 0) core.truncated_at = l;
    }
    return core;
}

/// Kernel PLS on all responses jointly (the improved-kernel form working on
/// Sxx and Sxy only); coefficient paths match classical NIPALS output.
inline PathCore pls2_path(const Moments& mom, int lmax) {
    const Index p = mom.p();
    const Index m = mom.m();
    PathCore core = make_core(p, m, lmax);

    int leff = lmax;
    if (mom.n > 0) leff = static_cast<int>(std::min<Index>(leff, std::min(mom.n - 1, p)));
    leff = static_cast<int>(std::min<Index>(leff, p));

    Matrix xty = mom.sxy;
    const double scale0 = std::max(xty.norm(), 1e-300);
    Matrix r_cols(p, leff), p_cols(p, leff);
    Matrix q_cols(m, leff);
    Matrix beta = Matrix::Zero(p, m);

    int l = 1;
    for (; l <= leff; ++l) {
        if (xty.norm() <= 1e-13 * scale0) break;  // no cross-covariance left

        Vector w(p);
        if (m == 1) {
            w = xty.col(0);
        } else {
            Eigen::SelfAdjointEigenSolver<Matrix> es((xty.transpose() * xty).eval());
            if (es.info() != Eigen::Success) throw std::runtime_error("PLS eigensolver failed");
            w.noalias() = xty * es.eigenvectors().col(m - 1);  // dominant direction
        }
        const double wnorm = w.norm();
        if (wnorm <= 0.0) break;
        w /= wnorm;

        Vector r = w;
        for (int j = 0; j < l - 1; ++j) r -= p_cols.col(j).dot(w) * r_cols.col(j);
        const double tsq = r.dot(mom.sxx * r);
        if (tsq <= 1e-28) break;

        const Vector p_a = mom.sxx * r / tsq;
        const Vector q_a = xty.transpose() * r / tsq;
        xty.noalias() -= (tsq * p_a) * q_a.transpose();

        r_cols.col(l - 1) = r;
        p_cols.col(l - 1) = p_a;
        q_cols.col(l - 1) = q_a;
        beta.noalias() += r * q_a.transpose();
        core.coef[l] = beta;
    }
    for (; l <= lmax; ++l) {
        core.coef[l] = beta;
        if (core.truncated_at < 0) core.truncated_at = l;
    }
    return core;
}

/// PLS1: the single-response path run independently per response column.
inline PathCore pls1_path(const Moments& mom, int lmax) {
    const Index p = mom.p();
    const Index m = mom.m();
    PathCore core = make_core(p, m, lmax);
    int truncated = -1;
    for (Index j = 0; j < m; ++j) {
        Moments single;
        single.n = mom.n;
        single.sxx = mom.sxx;
        single.sxy = mom.sxy.col(j);
        single.syy = mom.syy.block(j, j, 1, 1);
        const PathCore col = pls2_path(single, lmax);
        for (int l = 0; l <= lmax; ++l) core.coef[l].col(j) = col.coef[l];
        if (col.truncated_at >= 0)
            truncated = truncated < 0 ? col.truncated_at : std::min(truncated, col.truncated_at);
    }
    core.truncated_at = truncated;
    return core;
}

inline Matrix xenv_beta(const Moments& mom, const Matrix& basis) {
    Eigen::LLT<Matrix> core((basis.transpose() * mom.sxx * basis).eval());
    require(core.info() == Eigen::Success, "degenerate envelope basis");
    return basis * core.solve(basis.transpose() * mom.sxy);
}

}  // namespace detail

/// Fits one method's full component path on a dataset: centers, pre-reduces
/// wide data, dispatches, and back-projects coefficients to the original
/// predictor coordinates. Per-l failures are recorded in the path instead of
/// aborting it.
inline CoefficientPath fit_method(Method method, const Matrix& x, const Matrix& y, int lmax = 10,
                                  int senv_response_dim = 2, EnvelopeOptions opts = {},
                                  double prereduce_cap = 0.995) {
    require(lmax >= 1, "lmax must be >= 1");
    const Index n = x.rows();
    const Index p = x.cols();
    const Index m = y.cols();

    const CenteredData centered = center(x, y);

    CoefficientPath path;
    path.method = method;
    path.lmax = lmax;

    Matrix back;  // p x q back-projection when pre-reduced
    Moments mom;
    if (p > n) {
        PrereducedData reduced = pca_prereduce(centered.x, prereduce_cap);
        back = reduced.basis.loadings;
        path.prereduction = std::move(reduced.basis);
        CenteredData scored;
        scored.x = std::move(reduced.scores);
        scored.y = centered.y;
        mom = moments_from(scored);
    } else {
        mom = moments_from(centered);
    }
    const Index p_eff = mom.p();

    detail::PathCore core = detail::make_core(p_eff, m, lmax);
    switch (method) {
        case Method::Pcr:
            core = detail::pcr_path(mom, lmax);
            break;
        case Method::Pls1:
            core = detail::pls1_path(mom, lmax);
            break;
        case Method::Pls2:
            core = detail::pls2_path(mom, lmax);
            break;
        case Method::Ols: {
            const Matrix beta = fit_ols(mom);
            for (int l = 1; l <= lmax; ++l) core.coef[l] = beta;
            break;
        }
        case Method::Xenv: {
            Eigen::LLT<Matrix> syy_llt(mom.syy);
            require(syy_llt.info() == Eigen::Success, "singular response covariance");
            Matrix fit = mom.sxy * syy_llt.solve(mom.sxy.transpose());
            fit = 0.5 * (fit + fit.transpose());
            const Matrix res = mom.sxx - fit;
            const EnvelopeSolver solver(res, fit, opts);
            const int leff = static_cast<int>(std::min<Index>(lmax, p_eff));
            for (int l = 1; l <= leff; ++l) {
                try {
                    core.coef[l] = detail::xenv_beta(mom, solver.solve(l).basis);
                } catch (const std::exception&) {
                    core.failed[l] = 1;
                }
            }
            for (int l = leff + 1; l <= lmax; ++l) {
                core.coef[l] = core.coef[leff];
                core.failed[l] = core.failed[leff];
                if (core.truncated_at < 0) core.truncated_at = l;
            }
            break;
        }
        case Method::Senv: {
            const int d = static_cast<int>(std::min<Index>(senv_response_dim, m));
            path.senv_response_dim = d;
            const int leff = static_cast<int>(std::min<Index>(lmax, p_eff));
            for (int l = 1; l <= leff; ++l) {
                try {
                    core.coef[l] = fit_senv(mom, l, d, opts).beta;
                } catch (const std::exception&) {
                    core.failed[l] = 1;
                }
            }
            for (int l = leff + 1; l <= lmax; ++l) {
                core.coef[l] = core.coef[leff];
                core.failed[l] = core.failed[leff];
                if (core.truncated_at < 0) core.truncated_at = l;
            }
            break;
        }
    }

    path.truncated_at = core.truncated_at;
    path.failed = std::move(core.failed);
    path.coef.reserve(lmax + 1);
    path.intercept.reserve(lmax + 1);
    for (int l = 0; l <= lmax; ++l) {
        Matrix beta = back.size() > 0 ? Matrix(back * core.coef[l]) : std::move(core.coef[l]);
        path.intercept.push_back(centered.y_mean - beta.transpose() * centered.x_mean);
        path.coef.push_back(std::move(beta));
    }
    return path;
}

inline CoefficientPath fit_method(Method method, const SimDataset& data, int lmax = 10,
                                  int senv_response_dim = 2, EnvelopeOptions opts = {},
                                  double prereduce_cap = 0.995) {
    return fit_method(method, data.x, data.y, lmax, senv_response_dim, opts, prereduce_cap);
}

}  // namespace mrest
