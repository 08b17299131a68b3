#pragma once

#include "mrest/types.hpp"

#include <algorithm>
#include <cstdint>
#include <sstream>
#include <vector>

namespace mrest {

inline constexpr std::uint64_t kDefaultBaseSeed = 20250997ULL;

/// One cell of the factorial grid of data properties.
struct SimDesign {
    int design_id = 0;
    int p = 0;                ///< predictor count
    int n = 0;                ///< sample count
    int m = 0;                ///< response count
    double gamma = 0.0;       ///< predictor eigenvalue decay rate
    double eta = 0.0;         ///< response eigenvalue decay rate
    std::vector<int> relpos;  ///< 1-based positions of relevant predictor components
    double r2 = 0.0;          ///< coefficient of determination of the informative component
    std::uint64_t base_seed = kDefaultBaseSeed;

    void validate() const {
        require(design_id >= 1, "design_id must be positive");
        require(n >= 1 && p >= 1 && m >= 1, "n, p, m must be >= 1");
        require(gamma >= 0.0, "gamma must be >= 0");
        require(eta >= 0.0, "eta must be >= 0");
        require(r2 >= 0.0 && r2 < 1.0, "r2 must be in [0, 1)");
        require(!relpos.empty(), "relpos must be nonempty");
        std::vector<int> sorted = relpos;
        std::sort(sorted.begin(), sorted.end());
        require(std::adjacent_find(sorted.begin(), sorted.end()) == sorted.end(),
                "relpos indices must be distinct");
        require(sorted.front() >= 1 && sorted.back() <= p, "relpos indices must lie in 1..p");
    }
};

/// Formats a relpos set compactly: contiguous runs as "a:b", otherwise
/// semicolon-separated values ("1:4", "5:8", "1;3;7").
inline std::string format_relpos(const std::vector<int>& relpos) {
    std::vector<int> sorted = relpos;
    std::sort(sorted.begin(), sorted.end());
    bool contiguous = true;
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i] != sorted[i - 1] + 1) contiguous = false;
    std::ostringstream out;
    if (contiguous && sorted.size() > 1) {
        out << sorted.front() << ":" << sorted.back();
    } else {
        for (std::size_t i = 0; i < sorted.size(); ++i) {
            if (i) out << ";";
            out << sorted[i];
        }
    }
    return out.str();
}

inline std::vector<int> parse_relpos(const std::string& text) {
    std::vector<int> out;
    if (auto colon = text.find(':'); colon != std::string::npos) {
        const int lo = std::stoi(text.substr(0, colon));
        const int hi = std::stoi(text.substr(colon + 1));
        require(lo <= hi, "bad relpos range: " + text);
        for (int i = lo; i <= hi; ++i) out.push_back(i);
        return out;
    }
    std::string token;
    std::istringstream in(text);
    while (std::getline(in, token, ';'))
        if (!token.empty()) out.push_back(std::stoi(token));
    require(!out.empty(), "empty relpos: " + text);
    return out;
}

inline const std::vector<int>& grid_p_levels() {
    static const std::vector<int> levels = {20, 250};
    return levels;
}
inline const std::vector<double>& grid_gamma_levels() {
    static const std::vector<double> levels = {0.2, 0.9};
    return levels;
}
inline const std::vector<double>& grid_eta_levels() {
    static const std::vector<double> levels = {0.0, 0.4, 0.8, 1.2};
    return levels;
}
inline const std::vector<std::vector<int>>& grid_relpos_levels() {
    static const std::vector<std::vector<int>> levels = {{1, 2, 3, 4}, {5, 6, 7, 8}};
    return levels;
}

/// The complete factorial grid: 2 x 4 x 2 x 2 = 32 designs with n = 100,
/// m = 4, r2 = 0.8. Identifiers are assigned in lexicographic order over
/// (eta, relpos, gamma, p) with p varying fastest.
inline std::vector<SimDesign> design_grid(std::uint64_t base_seed = kDefaultBaseSeed) {
    std::vector<SimDesign> grid;
    grid.reserve(32);
    int id = 1;
    for (double eta : grid_eta_levels())
        for (const auto& relpos : grid_relpos_levels())
            for (double gamma : grid_gamma_levels())
                for (int p : grid_p_levels()) {
                    SimDesign d;
                    d.design_id = id++;
                    d.p = p;
                    d.n = 100;
                    d.m = 4;
                    d.gamma = gamma;
                    d.eta = eta;
                    d.relpos = relpos;
                    d.r2 = 0.8;
                    d.base_seed = base_seed;
                    d.validate();
                    grid.push_back(std::move(d));
                }
    return grid;
}

/// Looks up grid designs by factor levels rather than by index.
inline std::vector<int> match_designs(const std::vector<SimDesign>& grid, int p, double gamma,
                                      double eta, const std::vector<int>& relpos) {
    std::vector<int> ids;
    std::vector<int> want = relpos;
    std::sort(want.begin(), want.end());
    for (const auto& d : grid) {
        std::vector<int> have = d.relpos;
        std::sort(have.begin(), have.end());
        if (d.p == p && d.gamma == gamma && d.eta == eta && have == want)
            ids.push_back(d.design_id);
    }
    return ids;
}

}  // namespace mrest
