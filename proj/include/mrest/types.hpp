#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mrest {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// The five compared estimation methods plus an internal OLS baseline.
enum class Method { Pcr, Pls1, Pls2, Xenv, Senv, Ols };

inline constexpr Method kStudyMethods[] = {Method::Pcr, Method::Pls1, Method::Pls2,
                                           Method::Xenv, Method::Senv};

inline std::string_view method_name(Method m) {
    switch (m) {
        case Method::Pcr: return "PCR";
        case Method::Pls1: return "PLS1";
        case Method::Pls2: return "PLS2";
        case Method::Xenv: return "Xenv";
        case Method::Senv: return "Senv";
        case Method::Ols: return "OLS";
    }
    throw std::logic_error("unknown method");
}

/// Ordinal used for seeding and for canonical sort order. 0 is reserved
/// as the sentinel for per-design streams shared by all methods.
inline int method_ordinal(Method m) {
    switch (m) {
        case Method::Pcr: return 1;
        case Method::Pls1: return 2;
        case Method::Pls2: return 3;
        case Method::Xenv: return 4;
        case Method::Senv: return 5;
        case Method::Ols: return 6;
    }
    throw std::logic_error("unknown method");
}

inline Method parse_method(std::string_view name) {
    for (Method m : {Method::Pcr, Method::Pls1, Method::Pls2, Method::Xenv, Method::Senv,
                     Method::Ols}) {
        if (name == method_name(m)) return m;
    }
    throw std::invalid_argument("unknown method name: " + std::string(name));
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

}  // namespace mrest
