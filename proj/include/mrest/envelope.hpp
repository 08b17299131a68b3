#pragma once

#include "mrest/moments.hpp"
#include "mrest/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <cmath>
#include <limits>
#include <utility>
#include <vector>

namespace mrest {

struct EnvelopeOptions {
    int max_sweeps = 500;        ///< cap on cyclic coordinate sweeps
    double rel_tol = 1e-8;       ///< relative objective change for convergence
    int pool_extra = 10;         ///< pool draws subsets of the top u + pool_extra eigenvectors
    long pool_cap = 500000;      ///< pool width shrinks until the subset count fits this cap
    int inner_iters = 4;         ///< fixed-point iterations per column subproblem
    int max_alternations = 100;  ///< cap on simultaneous-envelope alternations
};

struct EnvelopeResult {
    Matrix basis;  ///< p x u, semi-orthogonal
    double objective = 0.0;
    bool converged = true;
    int sweeps = 0;
};

/// J(Gamma) = log det(Gamma' M Gamma) + log det(Gamma' (M+U)^-1 Gamma),
/// evaluated from scratch. Used for cross-checking and for the
/// simultaneous-envelope objective trace.
inline double envelope_objective(const Matrix& m_mat, const Matrix& u_mat, const Matrix& gamma) {
    const Matrix k = 0.5 * (m_mat + m_mat.transpose()) + 0.5 * (u_mat + u_mat.transpose());
    Eigen::LLT<Matrix> k_llt(k);
    require(k_llt.info() == Eigen::Success, "m_mat + u_mat must be positive definite");
    const Matrix ki_g = k_llt.solve(gamma);

    auto logdet = [](const Matrix& s) {
        Eigen::LLT<Matrix> llt(s);
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    };
    return logdet(gamma.transpose() * m_mat * gamma) + logdet(gamma.transpose() * ki_g);
}

/// Minimizes J over semi-orthogonal p x u bases. Deterministic: the start is
/// the best-scoring eigenvector subset of M and of M+U (all size-u subsets of
/// the leading u + pool_extra eigenvectors), refined by cyclic one-column
/// updates, each solved through a small eigenvalue fixed point. Column
/// replacements are only accepted when they lower J, so the final value never
/// exceeds any pool candidate's.
class EnvelopeSolver {
  public:
    EnvelopeSolver(const Matrix& m_mat, const Matrix& u_mat, EnvelopeOptions opts = {})
        : opts_(opts) {
        require(m_mat.rows() == m_mat.cols(), "m_mat must be square");
        require(u_mat.rows() == m_mat.rows() && u_mat.cols() == m_mat.cols(),
                "u_mat must match m_mat");
        p_full_ = m_mat.rows();
        const Matrix ms = 0.5 * (m_mat + m_mat.transpose());
        const Matrix ks = ms + 0.5 * (u_mat + u_mat.transpose());

        // Reject genuinely indefinite inputs up front. Eigenvalues at the
        // double-precision noise floor are treated as zero, not negative.
        Eigen::SelfAdjointEigenSolver<Matrix> m_check(ms, Eigen::EigenvaluesOnly);
        if (m_check.info() != Eigen::Success)
            throw std::runtime_error("envelope eigendecomposition failed");
        const double m_scale = m_check.eigenvalues().cwiseAbs().maxCoeff();
        require(m_scale > 0.0 && m_check.eigenvalues().minCoeff() > -1e-10 * m_scale,
                "m_mat must be positive definite");

        // Work on the numerically identifiable range of M + U. Population
        // covariances with exponentially decaying spectra can span ~100
        // orders of magnitude; directions below the double-precision floor
        // carry no usable information and would poison (M+U)^-1.
        Eigen::SelfAdjointEigenSolver<Matrix> ek0(ks);
        if (ek0.info() != Eigen::Success)
            throw std::runtime_error("envelope eigendecomposition failed");
        const double mu_max = ek0.eigenvalues().maxCoeff();
        require(mu_max > 0.0 && ek0.eigenvalues().minCoeff() > -1e-10 * mu_max,
                "m_mat + u_mat must be positive definite");
        Index rank = 0;
        for (Index i = 0; i < p_full_; ++i)
            if (ek0.eigenvalues()[i] > mu_max * 1e-13) ++rank;
        require(rank >= 1, "m_mat + u_mat is numerically zero");

        Matrix m_red, k_red;
        if (rank < p_full_) {
            range_.resize(p_full_, rank);
            for (Index i = 0; i < rank; ++i)
                range_.col(i) = ek0.eigenvectors().col(p_full_ - 1 - i);
            m_red = range_.transpose() * ms * range_;
            m_red = 0.5 * (m_red + m_red.transpose());
            k_red = range_.transpose() * ks * range_;
            k_red = 0.5 * (k_red + k_red.transpose());
        } else {
            m_red = ms;
            k_red = ks;
        }
        p_ = rank;
        m_ = std::move(m_red);

        Eigen::LLT<Matrix> m_llt(m_);
        require(m_llt.info() == Eigen::Success, "m_mat must be positive definite");
        Eigen::LLT<Matrix> k_llt(k_red);
        require(k_llt.info() == Eigen::Success, "m_mat + u_mat must be positive definite");

        Eigen::SelfAdjointEigenSolver<Matrix> em(m_);
        Eigen::SelfAdjointEigenSolver<Matrix> ek(k_red);
        if (em.info() != Eigen::Success || ek.info() != Eigen::Success)
            throw std::runtime_error("envelope eigendecomposition failed");

        // Store descending.
        m_vals_.resize(p_);
        k_vals_.resize(p_);
        m_vecs_.resize(p_, p_);
        k_vecs_.resize(p_, p_);
        for (Index i = 0; i < p_; ++i) {
            m_vals_[i] = em.eigenvalues()[p_ - 1 - i];
            k_vals_[i] = ek.eigenvalues()[p_ - 1 - i];
            m_vecs_.col(i) = em.eigenvectors().col(p_ - 1 - i);
            k_vecs_.col(i) = ek.eigenvectors().col(p_ - 1 - i);
        }
        ki_ = k_vecs_ * k_vals_.cwiseInverse().asDiagonal() * k_vecs_.transpose();
        ki_ = 0.5 * (ki_ + ki_.transpose());
        a_m_ = m_vecs_.transpose() * ki_ * m_vecs_;   // for pool scoring from M's eigenvectors
        b_k_ = k_vecs_.transpose() * m_ * k_vecs_;    // for pool scoring from K's eigenvectors
    }

    Index dim() const { return p_full_; }
    Index identifiable_rank() const { return p_; }

    /// J evaluated on the basis (projected onto the identifiable range when
    /// one is active).
    double objective(const Matrix& gamma) const {
        const Matrix g = to_internal(gamma);
        return logdet_psd(g.transpose() * m_ * g) + logdet_psd(g.transpose() * ki_ * g);
    }

    EnvelopeResult solve(int u) const { return solve_impl(u, nullptr, true); }

    /// Warm-started solve; `use_pool` may be disabled for repeated calls
    /// inside an alternating scheme once the pool has seeded the first one.
    EnvelopeResult solve_warm(int u, const Matrix& warm, bool use_pool) const {
        return solve_impl(u, &warm, use_pool);
    }

  private:
    static double logdet_psd(const Matrix& s) {
        Eigen::LLT<Matrix> llt(0.5 * (s + s.transpose()));
        if (llt.info() != Eigen::Success) return std::numeric_limits<double>::infinity();
        return 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
    }

    static double choose(int t, int u) {
        double c = 1.0;
        for (int i = 1; i <= u; ++i) c *= static_cast<double>(t - u + i) / i;
        return c;
    }

    template <typename F>
    static void for_each_combination(int t, int u, F&& fn) {
        std::vector<int> idx(u);
        for (int i = 0; i < u; ++i) idx[i] = i;
        while (true) {
            fn(idx);
            int i = u - 1;
            while (i >= 0 && idx[i] == t - u + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < u; ++j) idx[j] = idx[j - 1] + 1;
        }
    }

    /// Best subset of the leading eigenvectors of one source matrix.
    /// `diag_logs[i]` holds log of the i-th eigenvalue; `cross` is the other
    /// quadratic form expressed in this eigenbasis; `sign` flips the diagonal
    /// contribution for the K source where log det(diag) enters negatively.
    void scan_pool(const Vector& diag_logs, const Matrix& cross, double sign, int u,
                   double& best_j, std::vector<int>& best_idx, const Matrix** best_vecs,
                   const Matrix& vecs) const {
        int t = static_cast<int>(std::min<Index>(p_, u + opts_.pool_extra));
        while (t > u && choose(t, u) > static_cast<double>(opts_.pool_cap)) --t;
        Matrix sub(u, u);
        for_each_combination(t, u, [&](const std::vector<int>& idx) {
            double diag_part = 0.0;
            for (int i = 0; i < u; ++i) {
                diag_part += sign * diag_logs[idx[i]];
                for (int j = 0; j <= i; ++j) {
                    sub(i, j) = cross(idx[i], idx[j]);
                    sub(j, i) = sub(i, j);
                }
            }
            Eigen::LLT<Matrix> llt(sub);
            if (llt.info() != Eigen::Success) return;
            const double j_val =
                diag_part + 2.0 * Matrix(llt.matrixL()).diagonal().array().log().sum();
            if (j_val < best_j) {
                best_j = j_val;
                best_idx = idx;
                *best_vecs = &vecs;
            }
        });
    }

    Matrix to_internal(const Matrix& gamma_full) const {
        if (range_.size() == 0) return gamma_full;
        Matrix g = range_.transpose() * gamma_full;
        // Projection can shrink columns that leak outside the range.
        Eigen::HouseholderQR<Matrix> qr(g);
        return Matrix(qr.householderQ()).leftCols(g.cols());
    }

    Matrix from_internal(const Matrix& gamma_red) const {
        if (range_.size() == 0) return gamma_red;
        return range_ * gamma_red;
    }

    double objective_internal(const Matrix& g) const {
        return logdet_psd(g.transpose() * m_ * g) + logdet_psd(g.transpose() * ki_ * g);
    }

    EnvelopeResult solve_impl(int u, const Matrix* warm, bool use_pool) const {
        require(u >= 1 && u <= p_, "envelope dimension exceeds the identifiable rank");
        if (u == p_) {
            EnvelopeResult full;
            full.basis = from_internal(Matrix::Identity(p_, p_));
            full.objective = objective(full.basis);
            return full;
        }

        Matrix gamma;
        double j_best = std::numeric_limits<double>::infinity();
        if (use_pool) {
            std::vector<int> idx;
            const Matrix* source = nullptr;
            scan_pool(m_vals_.array().log().matrix(), a_m_, +1.0, u, j_best, idx, &source,
                      m_vecs_);
            scan_pool(k_vals_.array().log().matrix(), b_k_, -1.0, u, j_best, idx, &source,
                      k_vecs_);
            if (source != nullptr) {
                gamma.resize(p_, u);
                for (int i = 0; i < u; ++i) gamma.col(i) = source->col(idx[i]);
            }
        }
        if (warm != nullptr) {
            const Matrix warm_red = to_internal(*warm);
            const double j_warm = objective_internal(warm_red);
            if (j_warm < j_best) {
                j_best = j_warm;
                gamma = warm_red;
            }
        }
        if (gamma.size() == 0) gamma = k_vecs_.leftCols(u);

        EnvelopeResult result;
        double j_cur = objective_internal(gamma);
        result.converged = false;
        int sweep = 0;
        for (; sweep < opts_.max_sweeps; ++sweep) {
            for (int c = 0; c < u; ++c) update_column(gamma, c, u);
            const double j_next = objective_internal(gamma);
            const double drop = j_cur - j_next;
            j_cur = j_next;
            if (std::abs(drop) <= opts_.rel_tol * std::max(1.0, std::abs(j_cur))) {
                result.converged = true;
                ++sweep;
                break;
            }
        }
        // Clean re-orthonormalization; J depends only on the span.
        Eigen::HouseholderQR<Matrix> qr(gamma);
        gamma = Matrix(qr.householderQ()).leftCols(u);

        result.basis = from_internal(gamma);
        result.objective = objective_internal(gamma);
        result.sweeps = sweep;
        return result;
    }

    void update_column(Matrix& gamma, int c, int u) const {
        Matrix g0;        // p x (p-u+1) complement basis of the fixed columns
        Matrix at, bt;    // quadratic forms restricted to the complement
        Vector w;
        if (u == 1) {
            at = m_;
            bt = ki_;
            w = gamma.col(0);
        } else {
            Matrix fixed(p_, u - 1);
            int k = 0;
            for (int j = 0; j < u; ++j)
                if (j != c) fixed.col(k++) = gamma.col(j);

            Eigen::HouseholderQR<Matrix> qr(fixed);
            const Matrix q_full = qr.householderQ();
            g0 = q_full.rightCols(p_ - (u - 1));

            const Matrix mg = m_ * fixed;
            const Matrix kg = ki_ * fixed;
            Eigen::LLT<Matrix> m_core((fixed.transpose() * mg).eval());
            Eigen::LLT<Matrix> k_core((fixed.transpose() * kg).eval());
            if (m_core.info() != Eigen::Success || k_core.info() != Eigen::Success) return;
            const Matrix a = m_ - mg * m_core.solve(mg.transpose());
            const Matrix b = ki_ - kg * k_core.solve(kg.transpose());
            at = g0.transpose() * a * g0;
            bt = g0.transpose() * b * g0;
            w = g0.transpose() * gamma.col(c);
        }
        at = 0.5 * (at + at.transpose());
        bt = 0.5 * (bt + bt.transpose());
        w.normalize();

        constexpr double tiny = 1e-300;
        auto f = [&](const Vector& v) {
            const double a = std::max(v.dot(at * v), tiny);
            const double b = std::max(v.dot(bt * v), tiny);
            return std::log(a) + std::log(b);
        };

        const double f_start = f(w);
        Vector w_best = w;
        double f_best = f_start;
        Vector w_it = w;
        for (int it = 0; it < opts_.inner_iters; ++it) {
            const double qa = std::max(w_it.dot(at * w_it), tiny);
            const double qb = std::max(w_it.dot(bt * w_it), tiny);
            const Matrix combined = at / qa + bt / qb;
            Eigen::SelfAdjointEigenSolver<Matrix> es(combined);
            if (es.info() != Eigen::Success) break;
            w_it = es.eigenvectors().col(0);  // smallest eigenvalue
            const double f_it = f(w_it);
            if (f_it < f_best) {
                f_best = f_it;
                w_best = w_it;
            }
        }
        if (f_best < f_start) gamma.col(c) = (u == 1) ? w_best : Vector(g0 * w_best);
    }

    EnvelopeOptions opts_;
    Index p_full_ = 0;  ///< ambient dimension
    Index p_ = 0;       ///< identifiable rank the solver works in
    Matrix range_;      ///< p_full x p_ range basis; empty when p_ == p_full
    Matrix m_;          ///< symmetrized M, restricted
    Matrix ki_;         ///< (M+U)^-1, restricted
    Vector m_vals_, k_vals_;
    Matrix m_vecs_, k_vecs_;
    Matrix a_m_, b_k_;
};

inline EnvelopeResult envelope_basis(const Matrix& m_mat, const Matrix& u_mat, int u,
                                     EnvelopeOptions opts = {}) {
    return EnvelopeSolver(m_mat, u_mat, opts).solve(u);
}

struct XenvFit {
    Matrix beta;  ///< p x m
    EnvelopeResult envelope;
};

/// Predictor envelope: splits Sxx into material and immaterial parts and
/// regresses through the material ones only.
inline XenvFit fit_xenv(const Moments& mom, int u, EnvelopeOptions opts = {}) {
    const Index p = mom.p();
    require(u >= 1 && u <= p, "envelope dimension out of range");
    if (mom.n > 0) require(u <= std::min<Index>(mom.n - 1, p), "u exceeds the data rank bound");

    Eigen::LLT<Matrix> syy_llt(mom.syy);
    require(syy_llt.info() == Eigen::Success, "singular response covariance");
    Matrix fit = mom.sxy * syy_llt.solve(mom.sxy.transpose());
    fit = 0.5 * (fit + fit.transpose());
    const Matrix res = mom.sxx - fit;

    XenvFit out;
    out.envelope = envelope_basis(res, fit, u, opts);
    const Matrix& g = out.envelope.basis;
    Eigen::LLT<Matrix> core((g.transpose() * mom.sxx * g).eval());
    require(core.info() == Eigen::Success, "degenerate envelope basis");
    out.beta = g * core.solve(g.transpose() * mom.sxy);
    return out;
}

struct SenvFit {
    Matrix beta;   ///< p x m
    Matrix gamma;  ///< p x u predictor basis
    Matrix phi;    ///< m x d response basis
    std::vector<double> objective_trace;  ///< accepted alternation objectives, non-increasing
    bool converged = false;
    bool oscillated = false;
    int alternations = 0;
};

/// Simultaneous envelope via alternation: reduce y through Phi and fit a
/// predictor envelope, then update Phi from the mirrored response-side
/// objective given the predictor basis. Alternation steps are accepted only
/// while the combined objective does not increase.
inline SenvFit fit_senv(const Moments& mom, int u, int d, EnvelopeOptions opts = {}) {
    const Index p = mom.p();
    const Index m = mom.m();
    require(u >= 1 && u <= p, "envelope dimension out of range");
    require(d >= 1 && d <= m, "response dimension out of range");
    if (mom.n > 0) require(u <= std::min<Index>(mom.n - 1, p), "u exceeds the data rank bound");

    Eigen::LLT<Matrix> sxx_llt(mom.sxx);
    require(sxx_llt.info() == Eigen::Success, "singular predictor covariance");
    Eigen::LLT<Matrix> syy_llt(mom.syy);
    require(syy_llt.info() == Eigen::Success, "singular response covariance");

    // Initial response basis: leading directions of the fitted response
    // covariance Syx Sxx^-1 Sxy.
    Matrix fit_y0 = mom.sxy.transpose() * sxx_llt.solve(mom.sxy);
    fit_y0 = 0.5 * (fit_y0 + fit_y0.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> ey(fit_y0);
    Matrix phi(m, d);
    for (int k = 0; k < d; ++k) {
        Vector v = ey.eigenvectors().col(m - 1 - k);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        phi.col(k) = v;
    }

    auto predictor_parts = [&](const Matrix& phi_now) {
        const Matrix sxy_r = mom.sxy * phi_now;                       // p x d
        const Matrix syy_r = phi_now.transpose() * mom.syy * phi_now; // d x d
        Eigen::LLT<Matrix> llt(syy_r);
        require(llt.info() == Eigen::Success, "singular reduced response covariance");
        Matrix fit = sxy_r * llt.solve(sxy_r.transpose());
        fit = 0.5 * (fit + fit.transpose());
        return std::pair<Matrix, Matrix>(mom.sxx - fit, fit);
    };
    auto response_parts = [&](const Matrix& gamma_now) {
        const Matrix sxy_g = gamma_now.transpose() * mom.sxy;             // u x m
        const Matrix sxx_g = gamma_now.transpose() * mom.sxx * gamma_now; // u x u
        Eigen::LLT<Matrix> llt(sxx_g);
        require(llt.info() == Eigen::Success, "singular reduced predictor covariance");
        Matrix fit = sxy_g.transpose() * llt.solve(sxy_g);
        fit = 0.5 * (fit + fit.transpose());
        return std::pair<Matrix, Matrix>(mom.syy - fit, fit);
    };

    SenvFit out;

    // d = m pins the response basis to the full space, which reduces the
    // simultaneous envelope to the predictor envelope exactly; run that
    // reduction instead of alternating around a fixed point.
    if (d == m) {
        Matrix fit = mom.sxy * syy_llt.solve(mom.sxy.transpose());
        fit = 0.5 * (fit + fit.transpose());
        const Matrix res = mom.sxx - fit;
        const EnvelopeResult env = EnvelopeSolver(res, fit, opts).solve(u);
        out.gamma = env.basis;
        out.phi = Matrix::Identity(m, m);
        const auto [res_y, fit_y] = response_parts(out.gamma);
        out.objective_trace.push_back(env.objective +
                                      envelope_objective(res_y, fit_y, out.phi));
        out.converged = env.converged;
        out.alternations = 1;
        Eigen::LLT<Matrix> core((out.gamma.transpose() * mom.sxx * out.gamma).eval());
        require(core.info() == Eigen::Success, "degenerate envelope basis");
        out.beta = out.gamma * core.solve(out.gamma.transpose() * mom.sxy);
        return out;
    }

    Matrix gamma;
    Matrix best_gamma, best_phi;
    double prev_obj = std::numeric_limits<double>::infinity();
    for (int iter = 0; iter < opts.max_alternations; ++iter) {
        out.alternations = iter + 1;
        const auto [res_x, fit_x] = predictor_parts(phi);
        EnvelopeSolver solver_x(res_x, fit_x, opts);
        const EnvelopeResult env_x = (iter == 0 || gamma.size() == 0)
                                         ? solver_x.solve(u)
                                         : solver_x.solve_warm(u, gamma, false);
        gamma = env_x.basis;

        const auto [res_y, fit_y] = response_parts(gamma);
        EnvelopeSolver solver_y(res_y, fit_y, opts);
        const EnvelopeResult env_y = (iter == 0) ? solver_y.solve(d)
                                                 : solver_y.solve_warm(d, phi, false);
        phi = env_y.basis;

        // Joint objective at the updated pair.
        const auto [res_x2, fit_x2] = predictor_parts(phi);
        const double obj =
            envelope_objective(res_x2, fit_x2, gamma) + envelope_objective(res_y, fit_y, phi);

        if (obj > prev_obj + 1e-12 * std::max(1.0, std::abs(prev_obj))) {
            out.oscillated = true;  // keep the previous best pair
            break;
        }
        out.objective_trace.push_back(obj);
        best_gamma = gamma;
        best_phi = phi;
        if (iter > 0 &&
            std::abs(prev_obj - obj) <= opts.rel_tol * std::max(1.0, std::abs(obj))) {
            out.converged = true;
            break;
        }
        prev_obj = obj;
    }

    out.gamma = best_gamma;
    out.phi = best_phi;
    Eigen::LLT<Matrix> core((best_gamma.transpose() * mom.sxx * best_gamma).eval());
    require(core.info() == Eigen::Success, "degenerate envelope basis");
    out.beta = best_gamma * core.solve(best_gamma.transpose() * (mom.sxy * best_phi)) *
               best_phi.transpose();
    return out;
}

}  // namespace mrest
