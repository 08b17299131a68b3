#pragma once

#include "mrest/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <tuple>
#include <vector>

namespace mrest {

/// One (design, method, replicate, response, l) cell of the study.
/// est_error is scaled by the response variance, pred_error by the
/// irreducible error, so the prediction optimum sits at 1.
struct ErrorRecord {
    int design_id = 0;
    Method method = Method::Pcr;
    int replicate = 0;
    int response = 0;  ///< 1-based
    int l = 0;
    double est_error = 0.0;
    double pred_error = 0.0;
};

/// (beta_j - betahat_j)' (beta_j - betahat_j) / sigma2_y_j.
inline double estimation_error(const Vector& beta_true_col, const Vector& beta_hat_col,
                               double sigma2_y) {
    require(beta_true_col.size() == beta_hat_col.size(), "coefficient length mismatch");
    require(sigma2_y > 0.0, "response variance must be positive");
    return (beta_true_col - beta_hat_col).squaredNorm() / sigma2_y;
}

/// Population mean squared prediction error of the fitted rule at a fresh x,
/// scaled by the irreducible error:
/// [ (bhat - b)' Sigma_xx (bhat - b) + sigma2_eps ] / sigma2_eps >= 1.
inline double prediction_error(const Vector& beta_true_col, const Vector& beta_hat_col,
                               const Matrix& sigma_xx, double sigma2_eps) {
    require(beta_true_col.size() == beta_hat_col.size(), "coefficient length mismatch");
    require(sigma_xx.rows() == beta_true_col.size() && sigma_xx.cols() == sigma_xx.rows(),
            "sigma_xx shape mismatch");
    require(sigma2_eps > 0.0, "irreducible error must be positive");
    const Vector delta = beta_hat_col - beta_true_col;
    return (delta.dot(sigma_xx * delta) + sigma2_eps) / sigma2_eps;
}

/// Mean over replicates for each l; input indexed [replicate][l].
inline std::vector<double> average_error_path(const std::vector<std::vector<double>>& replicates) {
    require(!replicates.empty(), "no replicates to average");
    const std::size_t len = replicates.front().size();
    for (const auto& path : replicates)
        require(path.size() == len, "replicate paths must share the component range");
    std::vector<double> avg(len, 0.0);
    for (const auto& path : replicates)
        for (std::size_t l = 0; l < len; ++l) avg[l] += path[l];
    for (double& value : avg) value /= static_cast<double>(replicates.size());
    return avg;
}

/// argmin over l, ties broken toward the smaller l.
inline int select_common_component(const std::vector<double>& avg_path) {
    require(!avg_path.empty(), "empty path");
    int best = 0;
    for (int l = 1; l < static_cast<int>(avg_path.size()); ++l)
        if (avg_path[l] < avg_path[best]) best = l;
    return best;
}

/// Same rule applied to a single replicate's path.
inline int select_per_replicate_component(const std::vector<double>& path) {
    return select_common_component(path);
}

/// Row keys of the assembled wide datasets, in canonical order.
struct RecordKey {
    int design_id = 0;
    Method method = Method::Pcr;
    int replicate = 0;

    friend bool operator<(const RecordKey& a, const RecordKey& b) {
        return std::tuple(a.design_id, method_ordinal(a.method), a.replicate) <
               std::tuple(b.design_id, method_ordinal(b.method), b.replicate);
    }
    friend bool operator==(const RecordKey& a, const RecordKey& b) {
        return a.design_id == b.design_id && a.method == b.method && a.replicate == b.replicate;
    }
};

/// The error dataset u (per-replicate errors at the common optimal l) or the
/// component dataset v (per-replicate optimal l), one row per key.
struct AssembledDataset {
    std::vector<RecordKey> keys;
    Matrix values;  ///< rows x m
    std::vector<std::vector<int>> common_l;  ///< [design,method index][response], only for u
};

namespace detail {

struct RecordGrid {
    std::vector<int> designs;
    std::vector<Method> methods;
    std::vector<int> replicates;
    int m = 0;
    int lmax = 0;
    // flat index -> est error path; missing cells flagged by NaN
    std::vector<double> est;

    std::size_t slot(std::size_t di, std::size_t mi, std::size_t ri, int response,
                     int l) const {
        return (((di * methods.size() + mi) * replicates.size() + ri) * m + (response - 1)) *
                   (lmax + 1) +
               l;
    }
};

inline RecordGrid index_records(const std::vector<ErrorRecord>& records) {
    require(!records.empty(), "no records to assemble");
    RecordGrid grid;
    for (const auto& r : records) {
        grid.designs.push_back(r.design_id);
        grid.replicates.push_back(r.replicate);
        grid.m = std::max(grid.m, r.response);
        grid.lmax = std::max(grid.lmax, r.l);
    }
    std::sort(grid.designs.begin(), grid.designs.end());
    grid.designs.erase(std::unique(grid.designs.begin(), grid.designs.end()), grid.designs.end());
    std::sort(grid.replicates.begin(), grid.replicates.end());
    grid.replicates.erase(std::unique(grid.replicates.begin(), grid.replicates.end()),
                          grid.replicates.end());
    std::vector<int> ords;
    for (const auto& r : records) ords.push_back(method_ordinal(r.method));
    std::sort(ords.begin(), ords.end());
    ords.erase(std::unique(ords.begin(), ords.end()), ords.end());
    for (int o : ords)
        for (Method m : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv, Method::Senv,
                         Method::Ols})
            if (method_ordinal(m) == o) grid.methods.push_back(m);

    const std::size_t total = grid.designs.size() * grid.methods.size() *
                              grid.replicates.size() * grid.m * (grid.lmax + 1);
    grid.est.assign(total, std::numeric_limits<double>::quiet_NaN());

    auto pos = [](const auto& v, auto x) {
        return static_cast<std::size_t>(std::lower_bound(v.begin(), v.end(), x) - v.begin());
    };
    for (const auto& r : records) {
        const std::size_t di = pos(grid.designs, r.design_id);
        std::size_t mi = 0;
        while (mi < grid.methods.size() && grid.methods[mi] != r.method) ++mi;
        const std::size_t ri = pos(grid.replicates, r.replicate);
        grid.est[grid.slot(di, mi, ri, r.response, r.l)] = r.est_error;
    }

    // The grid must be complete: every cell of the observed cross filled.
    std::ostringstream missing;
    int missing_count = 0;
    for (std::size_t di = 0; di < grid.designs.size(); ++di)
        for (std::size_t mi = 0; mi < grid.methods.size(); ++mi)
            for (std::size_t ri = 0; ri < grid.replicates.size(); ++ri)
                for (int j = 1; j <= grid.m; ++j)
                    for (int l = 0; l <= grid.lmax; ++l)
                        if (std::isnan(grid.est[grid.slot(di, mi, ri, j, l)])) {
                            if (missing_count < 20)
                                missing << " (design=" << grid.designs[di]
                                        << ", method=" << method_name(grid.methods[mi])
                                        << ", replicate=" << grid.replicates[ri] << ", response="
                                        << j << ", l=" << l << ")";
                            ++missing_count;
                        }
    if (missing_count > 0)
        throw std::invalid_argument("incomplete record grid; missing " +
                                    std::to_string(missing_count) + " cells:" + missing.str());
    return grid;
}

}  // namespace detail

/// Error dataset u: for each (design, method, response), the common optimal
/// component count is the argmin of the replicate-averaged estimation error
/// path; each replicate contributes its error at that l.
inline AssembledDataset assemble_error_dataset(const std::vector<ErrorRecord>& records) {
    const detail::RecordGrid grid = detail::index_records(records);
    AssembledDataset out;
    const std::size_t rows = grid.designs.size() * grid.methods.size() * grid.replicates.size();
    out.values.resize(rows, grid.m);
    std::size_t row = 0;
    for (std::size_t di = 0; di < grid.designs.size(); ++di)
        for (std::size_t mi = 0; mi < grid.methods.size(); ++mi) {
            std::vector<int> l_common(grid.m, 0);
            for (int j = 1; j <= grid.m; ++j) {
                std::vector<double> avg(grid.lmax + 1, 0.0);
                for (std::size_t ri = 0; ri < grid.replicates.size(); ++ri)
                    for (int l = 0; l <= grid.lmax; ++l)
                        avg[l] += grid.est[grid.slot(di, mi, ri, j, l)];
                for (double& value : avg) value /= static_cast<double>(grid.replicates.size());
                l_common[j - 1] = select_common_component(avg);
            }
            out.common_l.push_back(l_common);
            for (std::size_t ri = 0; ri < grid.replicates.size(); ++ri) {
                out.keys.push_back({grid.designs[di], grid.methods[mi], grid.replicates[ri]});
                for (int j = 1; j <= grid.m; ++j)
                    out.values(row, j - 1) = grid.est[grid.slot(di, mi, ri, j, l_common[j - 1])];
                ++row;
            }
        }
    return out;
}

/// Component dataset v: per-replicate argmin of the estimation error path.
inline AssembledDataset assemble_component_dataset(const std::vector<ErrorRecord>& records) {
    const detail::RecordGrid grid = detail::index_records(records);
    AssembledDataset out;
    const std::size_t rows = grid.designs.size() * grid.methods.size() * grid.replicates.size();
    out.values.resize(rows, grid.m);
    std::size_t row = 0;
    for (std::size_t di = 0; di < grid.designs.size(); ++di)
        for (std::size_t mi = 0; mi < grid.methods.size(); ++mi)
            for (std::size_t ri = 0; ri < grid.replicates.size(); ++ri) {
                out.keys.push_back({grid.designs[di], grid.methods[mi], grid.replicates[ri]});
                for (int j = 1; j <= grid.m; ++j) {
                    std::vector<double> path(grid.lmax + 1);
                    for (int l = 0; l <= grid.lmax; ++l)
                        path[l] = grid.est[grid.slot(di, mi, ri, j, l)];
                    out.values(row, j - 1) = select_per_replicate_component(path);
                }
                ++row;
            }
    return out;
}

}  // namespace mrest
