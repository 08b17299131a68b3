#pragma once

#include "mrest/design.hpp"
#include "mrest/metrics.hpp"
#include "mrest/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <boost/math/distributions/fisher_f.hpp>

#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

namespace mrest {

struct PcaSummary {
    Matrix scores;     ///< rows x m
    Matrix loadings;   ///< m x m, orthonormal, descending variance
    Vector explained;  ///< variance fractions, sums to 1
};

/// Mean-centered PCA (no rescaling: the error and component datasets share
/// units across columns). Loading signs are fixed so each column's
/// largest-magnitude entry is positive.
inline PcaSummary pca_scores(const Matrix& data) {
    const Index rows = data.rows();
    const Index m = data.cols();
    require(rows > m, "PCA needs more rows than columns");
    require(data.allFinite(), "PCA input must be finite");

    const Matrix centered = data.rowwise() - data.colwise().mean();
    const Matrix cov = centered.transpose() * centered / static_cast<double>(rows - 1);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
    if (eig.info() != Eigen::Success) throw std::runtime_error("PCA eigendecomposition failed");
    const double total = eig.eigenvalues().sum();
    require(total > 1e-300, "PCA on zero-variance data");

    PcaSummary out;
    out.loadings.resize(m, m);
    out.explained.resize(m);
    for (Index k = 0; k < m; ++k) {
        Vector v = eig.eigenvectors().col(m - 1 - k);
        Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        out.loadings.col(k) = v;
        out.explained[k] = std::max(eig.eigenvalues()[m - 1 - k], 0.0) / total;
    }
    out.scores = centered * out.loadings;
    return out;
}

/// Aligned factor columns for the rows of u/v.
struct FactorFrame {
    std::vector<std::string> factor_names;
    std::vector<std::vector<std::string>> level_names;  ///< per factor, canonical order
    std::vector<std::vector<int>> codes;                ///< [factor][row] -> level index

    std::size_t rows() const { return factor_names.empty() ? 0 : codes.front().size(); }
    int levels(std::size_t f) const { return static_cast<int>(level_names[f].size()); }
};

namespace detail {

inline std::string format_level(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", value);
    return buf;
}

}  // namespace detail

/// Builds the (p, gamma, eta, relpos, method) frame for assembled rows,
/// keeping only levels that actually occur, in canonical grid order.
inline FactorFrame factor_frame(const std::vector<RecordKey>& keys,
                                const std::vector<SimDesign>& designs) {
    std::map<int, const SimDesign*> by_id;
    for (const auto& d : designs) by_id[d.design_id] = &d;
    for (const auto& key : keys)
        require(by_id.count(key.design_id) > 0,
                "design " + std::to_string(key.design_id) + " missing from the key table");

    FactorFrame frame;
    frame.factor_names = {"p", "gamma", "eta", "relpos", "method"};
    frame.level_names.resize(5);
    frame.codes.assign(5, {});

    auto levels_of = [&](auto getter, const auto& canonical) {
        std::vector<std::string> observed;
        std::set<std::string> seen;
        for (const auto& key : keys) seen.insert(getter(*by_id[key.design_id]));
        for (const auto& level : canonical)
            if (seen.count(level)) observed.push_back(level);
        for (const auto& level : seen)  // off-grid levels appended in name order
            if (std::find(observed.begin(), observed.end(), level) == observed.end())
                observed.push_back(level);
        return observed;
    };

    std::vector<std::string> canon_p, canon_gamma, canon_eta, canon_relpos;
    for (int p : grid_p_levels()) canon_p.push_back(std::to_string(p));
    for (double g : grid_gamma_levels()) canon_gamma.push_back(detail::format_level(g));
    for (double e : grid_eta_levels()) canon_eta.push_back(detail::format_level(e));
    for (const auto& r : grid_relpos_levels()) canon_relpos.push_back(format_relpos(r));

    frame.level_names[0] = levels_of(
        [](const SimDesign& d) { return std::to_string(d.p); }, canon_p);
    frame.level_names[1] = levels_of(
        [](const SimDesign& d) { return detail::format_level(d.gamma); }, canon_gamma);
    frame.level_names[2] = levels_of(
        [](const SimDesign& d) { return detail::format_level(d.eta); }, canon_eta);
    frame.level_names[3] = levels_of(
        [](const SimDesign& d) { return format_relpos(d.relpos); }, canon_relpos);
    std::set<int> method_ords;
    for (const auto& key : keys) method_ords.insert(method_ordinal(key.method));
    for (Method m : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv, Method::Senv,
                     Method::Ols})
        if (method_ords.count(method_ordinal(m)))
            frame.level_names[4].push_back(std::string(method_name(m)));

    auto code_of = [&](std::size_t f, const std::string& level) {
        const auto& names = frame.level_names[f];
        const auto it = std::find(names.begin(), names.end(), level);
        return static_cast<int>(it - names.begin());
    };
    for (const auto& key : keys) {
        const SimDesign& d = *by_id[key.design_id];
        frame.codes[0].push_back(code_of(0, std::to_string(d.p)));
        frame.codes[1].push_back(code_of(1, detail::format_level(d.gamma)));
        frame.codes[2].push_back(code_of(2, detail::format_level(d.eta)));
        frame.codes[3].push_back(code_of(3, format_relpos(d.relpos)));
        frame.codes[4].push_back(code_of(4, std::string(method_name(key.method))));
    }
    return frame;
}

struct TermBlock {
    std::string label;
    int start = 0;  ///< first column in the model matrix
    int cols = 0;   ///< also the term's hypothesis degrees of freedom
};

struct ModelMatrix {
    Matrix x;  ///< rows x (1 + sum of term columns); column 0 is the intercept
    std::vector<TermBlock> terms;
};

/// Treatment-coded model matrix with all interactions of the factors up to
/// `max_order`: main effects in frame order, then 2-way, then 3-way, each
/// group in lexicographic factor order. Factors with a single observed level
/// contribute no columns.
inline ModelMatrix build_model_matrix(const FactorFrame& frame, int max_order = 3) {
    require(max_order >= 1, "max_order must be >= 1");
    const std::size_t rows = frame.rows();
    require(rows > 0, "empty factor frame");
    const int nf = static_cast<int>(frame.factor_names.size());

    // Dummy columns per factor (treatment coding, first level as reference).
    std::vector<Matrix> dummies(nf);
    for (int f = 0; f < nf; ++f) {
        const int levels = frame.levels(f);
        dummies[f].setZero(rows, std::max(levels - 1, 0));
        for (std::size_t r = 0; r < rows; ++r)
            if (frame.codes[f][r] > 0) dummies[f](r, frame.codes[f][r] - 1) = 1.0;
    }

    std::vector<std::vector<int>> term_factors;
    for (int order = 1; order <= max_order; ++order) {
        std::vector<int> idx(order);
        for (int i = 0; i < order; ++i) idx[i] = i;
        while (true) {
            term_factors.push_back(idx);
            int i = order - 1;
            while (i >= 0 && idx[i] == nf - order + i) --i;
            if (i < 0) break;
            ++idx[i];
            for (int j = i + 1; j < order; ++j) idx[j] = idx[j - 1] + 1;
        }
    }

    std::vector<Matrix> blocks;
    std::vector<TermBlock> terms;
    int col = 1;
    for (const auto& factors : term_factors) {
        int width = 1;
        for (int f : factors) width *= static_cast<int>(dummies[f].cols());
        if (width == 0) continue;

        Matrix block = Matrix::Ones(rows, 1);
        for (int f : factors) {
            Matrix next(rows, block.cols() * dummies[f].cols());
            for (Index a = 0; a < block.cols(); ++a)
                for (Index b = 0; b < dummies[f].cols(); ++b)
                    next.col(a * dummies[f].cols() + b) =
                        block.col(a).cwiseProduct(dummies[f].col(b));
            block = std::move(next);
        }
        std::string label;
        for (std::size_t i = 0; i < factors.size(); ++i) {
            if (i) label += ":";
            label += frame.factor_names[factors[i]];
        }
        terms.push_back({label, col, width});
        col += width;
        blocks.push_back(std::move(block));
    }

    ModelMatrix mm;
    mm.x.resize(rows, col);
    mm.x.col(0).setOnes();
    for (std::size_t t = 0; t < blocks.size(); ++t)
        mm.x.middleCols(terms[t].start, terms[t].cols) = blocks[t];
    mm.terms = std::move(terms);

    // Reject rank deficiency, naming the first term that brings none of its
    // own rank with it.
    Eigen::ColPivHouseholderQR<Matrix> full(mm.x);
    full.setThreshold(1e-10);
    if (full.rank() < mm.x.cols()) {
        for (const auto& term : mm.terms) {
            Eigen::ColPivHouseholderQR<Matrix> part(mm.x.leftCols(term.start + term.cols));
            part.setThreshold(1e-10);
            Eigen::ColPivHouseholderQR<Matrix> prev(mm.x.leftCols(term.start));
            prev.setThreshold(1e-10);
            if (part.rank() - prev.rank() < term.cols)
                throw std::invalid_argument("model matrix is rank deficient at term " +
                                            term.label);
        }
        throw std::invalid_argument("model matrix is rank deficient");
    }
    return mm;
}

struct ManovaTermResult {
    std::string term;
    double pillai = 0.0;
    double approx_f = 0.0;
    double df1 = 0.0;
    double df2 = 0.0;
    int df_h = 0;
    double p_value = 1.0;
};

/// Multivariate linear model by least squares with sequential (terms in
/// order) hypothesis SSCP matrices. For each term,
/// V = trace(H (H+E)^-1), with the standard F approximation
/// F = [(2n'+s+1)/(2m'+s+1)] V/(s-V).
inline std::vector<ManovaTermResult> manova_pillai(const Matrix& responses,
                                                   const ModelMatrix& mm) {
    const Index rows = responses.rows();
    const Index m = responses.cols();
    const Index cols = mm.x.cols();
    require(rows == mm.x.rows(), "row mismatch between responses and model matrix");
    require(rows > cols, "need more rows than model columns");
    require(rows - cols >= m, "residual degrees of freedom below the response count");

    Eigen::HouseholderQR<Matrix> qr(mm.x);
    const Matrix r_top = qr.matrixQR().topRows(cols).triangularView<Eigen::Upper>();
    for (Index j = 0; j < cols; ++j)
        require(std::abs(r_top(j, j)) > 1e-10, "model matrix is rank deficient");
    const Matrix q_thin = qr.householderQ() * Matrix::Identity(rows, cols);
    const Matrix z = q_thin.transpose() * responses;  // cols x m

    const Matrix e = responses.transpose() * responses - z.transpose() * z;
    const double df_e = static_cast<double>(rows - cols);
    Eigen::LLT<Matrix> e_llt(e);
    if (e_llt.info() != Eigen::Success)
        throw std::runtime_error("singular residual SSCP in MANOVA");

    std::vector<ManovaTermResult> results;
    for (const auto& term : mm.terms) {
        const Matrix zt = z.middleRows(term.start, term.cols);
        const Matrix h = zt.transpose() * zt;

        Eigen::LDLT<Matrix> he((h + e).eval());
        const double pillai = he.solve(h).trace();

        ManovaTermResult res;
        res.term = term.label;
        res.df_h = term.cols;
        res.pillai = pillai;
        const double s = std::min<double>(term.cols, static_cast<double>(m));
        const double mprime = (std::abs(term.cols - static_cast<double>(m)) - 1.0) / 2.0;
        const double nprime = (df_e - static_cast<double>(m) - 1.0) / 2.0;
        res.df1 = s * (2.0 * mprime + s + 1.0);
        res.df2 = s * (2.0 * nprime + s + 1.0);
        if (pillai >= s - 1e-12) {
            res.approx_f = std::numeric_limits<double>::infinity();
            res.p_value = 0.0;
        } else {
            res.approx_f =
                (2.0 * nprime + s + 1.0) / (2.0 * mprime + s + 1.0) * (pillai / (s - pillai));
            const boost::math::fisher_f dist(res.df1, res.df2);
            res.p_value = boost::math::cdf(boost::math::complement(dist, res.approx_f));
        }
        results.push_back(std::move(res));
    }
    return results;
}

struct EffectCell {
    std::vector<std::string> levels;  ///< one level name per requested factor
    long count = 0;
    Vector mean;       ///< per raw column; NaN when the cell is empty
    Vector std_error;  ///< per raw column
    double score_mean = std::numeric_limits<double>::quiet_NaN();
    double score_se = std::numeric_limits<double>::quiet_NaN();
};

struct EffectTable {
    std::vector<std::string> factors;
    std::vector<EffectCell> cells;  ///< full level cross, empty cells included
};

/// Cell means (first principal score and each raw column) with standard
/// errors over the cross of the requested factors' levels.
inline EffectTable effect_means(const Matrix& data, const FactorFrame& frame,
                                const std::vector<int>& term_factors) {
    require(!term_factors.empty(), "term must name at least one factor");
    require(static_cast<std::size_t>(data.rows()) == frame.rows(),
            "row mismatch between data and factors");
    for (int f : term_factors)
        require(f >= 0 && f < static_cast<int>(frame.factor_names.size()),
                "unknown factor index");

    const Vector score1 = pca_scores(data).scores.col(0);
    const Index m = data.cols();

    long cell_count = 1;
    for (int f : term_factors) cell_count *= frame.levels(f);

    EffectTable table;
    for (int f : term_factors) table.factors.push_back(frame.factor_names[f]);

    std::vector<long> counts(cell_count, 0);
    Matrix sums = Matrix::Zero(cell_count, m);
    Matrix sq_sums = Matrix::Zero(cell_count, m);
    Vector score_sums = Vector::Zero(cell_count);
    Vector score_sq = Vector::Zero(cell_count);

    for (std::size_t r = 0; r < frame.rows(); ++r) {
        long cell = 0;
        for (int f : term_factors) cell = cell * frame.levels(f) + frame.codes[f][r];
        ++counts[cell];
        sums.row(cell) += data.row(r);
        sq_sums.row(cell) += data.row(r).cwiseAbs2();
        score_sums[cell] += score1[r];
        score_sq[cell] += score1[r] * score1[r];
    }

    for (long cell = 0; cell < cell_count; ++cell) {
        EffectCell out;
        long rem = cell;
        std::vector<int> level_idx(term_factors.size());
        for (int i = static_cast<int>(term_factors.size()) - 1; i >= 0; --i) {
            level_idx[i] = static_cast<int>(rem % frame.levels(term_factors[i]));
            rem /= frame.levels(term_factors[i]);
        }
        for (std::size_t i = 0; i < term_factors.size(); ++i)
            out.levels.push_back(frame.level_names[term_factors[i]][level_idx[i]]);
        out.count = counts[cell];
        out.mean = Vector::Constant(m, std::numeric_limits<double>::quiet_NaN());
        out.std_error = Vector::Constant(m, std::numeric_limits<double>::quiet_NaN());
        if (out.count > 0) {
            out.mean = sums.row(cell).transpose() / static_cast<double>(out.count);
            out.score_mean = score_sums[cell] / static_cast<double>(out.count);
            if (out.count > 1) {
                const double denom = static_cast<double>(out.count - 1);
                for (Index j = 0; j < m; ++j) {
                    const double var = std::max(
                        (sq_sums(cell, j) - out.count * out.mean[j] * out.mean[j]) / denom, 0.0);
                    out.std_error[j] = std::sqrt(var / static_cast<double>(out.count));
                }
                const double svar = std::max(
                    (score_sq[cell] - out.count * out.score_mean * out.score_mean) / denom, 0.0);
                out.score_se = std::sqrt(svar / static_cast<double>(out.count));
            }
        }
        table.cells.push_back(std::move(out));
    }
    return table;
}

/// "8.56 (8)" / "5 (1)" style: two decimals with trailing zeros trimmed.
inline std::string format_min_entry(double value, int l) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f", value);
    std::string s = buf;
    if (s.find('.') != std::string::npos) {
        while (!s.empty() && s.back() == '0') s.pop_back();
        if (!s.empty() && s.back() == '.') s.pop_back();
    }
    return s + " (" + std::to_string(l) + ")";
}

struct SummaryRow {
    int design_id = 0;
    std::string metric;  ///< "estimation" or "prediction"
    int response = 0;
    Method method = Method::Pcr;
    double value = 0.0;
    int l = 0;
    std::string formatted;
};

/// Per (design, metric, response, method): the minimum replicate-averaged
/// error and its component count.
inline std::vector<SummaryRow> summary_table(const std::vector<ErrorRecord>& records,
                                             const std::vector<int>& design_filter = {}) {
    require(!records.empty(), "no records to summarize");
    std::set<int> wanted(design_filter.begin(), design_filter.end());
    std::set<int> present;
    for (const auto& r : records) present.insert(r.design_id);
    for (int id : wanted)
        require(present.count(id) > 0, "no records for design " + std::to_string(id));

    // (design, method ordinal, response, l) -> sums over replicates
    struct Cell {
        double est = 0.0, pred = 0.0;
        long count = 0;
    };
    std::map<std::tuple<int, int, int, int>, Cell> cells;
    int lmax = 0, m = 0;
    for (const auto& r : records) {
        if (!wanted.empty() && wanted.count(r.design_id) == 0) continue;
        auto& cell = cells[{r.design_id, method_ordinal(r.method), r.response, r.l}];
        cell.est += r.est_error;
        cell.pred += r.pred_error;
        ++cell.count;
        lmax = std::max(lmax, r.l);
        m = std::max(m, r.response);
    }

    std::vector<SummaryRow> rows;
    std::set<std::tuple<int, int, int>> groups;
    for (const auto& [key, cell] : cells)
        groups.insert({std::get<0>(key), std::get<1>(key), std::get<2>(key)});
    for (const auto& [design, ord, response] : groups) {
        std::vector<double> est_path, pred_path;
        for (int l = 0; l <= lmax; ++l) {
            const auto it = cells.find({design, ord, response, l});
            require(it != cells.end(), "missing cell in summary at l=" + std::to_string(l));
            est_path.push_back(it->second.est / it->second.count);
            pred_path.push_back(it->second.pred / it->second.count);
        }
        Method method = Method::Pcr;
        for (Method mth : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv, Method::Senv,
                           Method::Ols})
            if (method_ordinal(mth) == ord) method = mth;
        const int l_est = select_common_component(est_path);
        const int l_pred = select_common_component(pred_path);
        rows.push_back({design, "estimation", response, method, est_path[l_est], l_est,
                        format_min_entry(est_path[l_est], l_est)});
        rows.push_back({design, "prediction", response, method, pred_path[l_pred], l_pred,
                        format_min_entry(pred_path[l_pred], l_pred)});
    }
    return rows;
}

}  // namespace mrest
