#pragma once

#include "mrest/design.hpp"
#include "mrest/rng.hpp"
#include "mrest/types.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

namespace mrest {

/// The true joint covariance structure of one design, with everything the
/// harness needs for error evaluation: latent eigenvalues, rotations, the
/// derived covariance blocks, the true coefficients and the per-response
/// variance scales.
struct PopulationModel {
    Vector lambda;      ///< latent predictor eigenvalues, descending
    Vector kappa;       ///< latent response eigenvalues, descending
    Matrix sigma_zw;    ///< p x m latent cross-covariance (rows relpos, column 1)
    Matrix rot_x;       ///< p x p block-orthonormal predictor rotation
    Matrix rot_y;       ///< m x m orthonormal response rotation
    Matrix sigma_xx;    ///< p x p
    Matrix sigma_xy;    ///< p x m
    Matrix sigma_yy;    ///< m x m
    Matrix beta_true;   ///< p x m
    Vector sigma2_y;    ///< marginal response variances (Sigma_yy diagonal)
    Vector sigma2_eps;  ///< conditional response variances
    /// Lower-triangular factor of the joint covariance in latent (w, z)
    /// coordinates. The rotated joint mixes eigenvalue scales too wide for a
    /// dense factorization in doubles (down to exp(-224) for p=250,
    /// gamma=0.9), while the latent factor is diagonal outside one small
    /// well-scaled block. Sampling applies this factor, then the rotations.
    Matrix latent_chol;
    std::vector<int> relpos;  ///< echo of the design's relevant positions
};

/// n observations drawn from a population model.
struct SimDataset {
    Matrix x;  ///< n x p
    Matrix y;  ///< n x m
    int design_id = 0;
    Method method = Method::Pcr;
    int replicate = 0;
    std::uint64_t seed = 0;
};

/// lambda_i = exp(-gamma (i-1)), i = 1..p.
inline Vector predictor_eigenvalues(int p, double gamma) {
    require(p >= 1, "predictor count must be >= 1");
    require(gamma >= 0.0, "gamma must be >= 0");
    Vector lambda(p);
    for (int i = 0; i < p; ++i) lambda[i] = std::exp(-gamma * i);
    return lambda;
}

/// kappa_j = exp(-eta (j-1)), j = 1..m.
inline Vector response_eigenvalues(int m, double eta) {
    require(m >= 1, "response count must be >= 1");
    require(eta >= 0.0, "eta must be >= 0");
    Vector kappa(m);
    for (int j = 0; j < m; ++j) kappa[j] = std::exp(-eta * j);
    return kappa;
}

/// Cross-covariances between the latent predictor components and the single
/// informative response component. Nonzero only at relpos; magnitudes are
/// drawn with an excluded middle and rescaled so that
/// sum sigma_i^2 / (lambda_i kappa1) = r2 holds exactly.
inline Vector latent_cross_covariance(const Vector& lambda, double kappa1,
                                      const std::vector<int>& relpos, double r2, Rng& rng) {
    const int p = static_cast<int>(lambda.size());
    require(kappa1 > 0.0, "kappa1 must be positive");
    require(r2 >= 0.0 && r2 < 1.0, "r2 must be in [0, 1)");
    require(!relpos.empty(), "relpos must be nonempty");
    for (int idx : relpos) require(idx >= 1 && idx <= p, "relpos index out of range");

    Vector sigma = Vector::Zero(p);
    double weight = 0.0;
    for (int idx : relpos) {
        const double rho = rng.next_signed_magnitude(0.1, 1.0);
        sigma[idx - 1] = rho;
        weight += rho * rho / lambda[idx - 1];
    }
    if (r2 == 0.0) return Vector::Zero(p);
    const double scale = std::sqrt(r2 * kappa1 / weight);
    for (int idx : relpos) sigma[idx - 1] *= scale;
    return sigma;
}

namespace detail {

/// Orthonormalizes a k x k standard-normal draw by Householder QR; the sign
/// of each column is fixed by the QR diagonal so the draw alone determines
/// the result.
inline Matrix random_orthonormal(int k, Rng& rng) {
    Matrix g(k, k);
    for (Index j = 0; j < k; ++j)
        for (Index i = 0; i < k; ++i) g(i, j) = rng.next_normal();
    Eigen::HouseholderQR<Matrix> qr(g);
    Matrix q = qr.householderQ();
    const Matrix r = qr.matrixQR().triangularView<Eigen::Upper>();
    for (Index j = 0; j < k; ++j)
        if (r(j, j) < 0.0) q.col(j) = -q.col(j);
    return q;
}

}  // namespace detail

/// Block-orthonormal predictor rotation: one random orthonormal block on the
/// relpos positions, an independent block on the complement, zeros across.
inline Matrix block_rotation_x(int p, const std::vector<int>& relpos, Rng& rng) {
    require(p >= 1, "p must be >= 1");
    std::vector<int> rel = relpos;
    std::sort(rel.begin(), rel.end());
    require(!rel.empty() && rel.front() >= 1 && rel.back() <= p, "invalid relpos");
    std::vector<char> is_rel(p, 0);
    for (int idx : rel) is_rel[idx - 1] = 1;
    std::vector<int> comp;
    for (int i = 0; i < p; ++i)
        if (!is_rel[i]) comp.push_back(i + 1);

    Matrix rot = Matrix::Zero(p, p);
    const Matrix q_rel = detail::random_orthonormal(static_cast<int>(rel.size()), rng);
    for (std::size_t a = 0; a < rel.size(); ++a)
        for (std::size_t b = 0; b < rel.size(); ++b) rot(rel[a] - 1, rel[b] - 1) = q_rel(a, b);
    if (!comp.empty()) {
        const Matrix q_comp = detail::random_orthonormal(static_cast<int>(comp.size()), rng);
        for (std::size_t a = 0; a < comp.size(); ++a)
            for (std::size_t b = 0; b < comp.size(); ++b)
                rot(comp[a] - 1, comp[b] - 1) = q_comp(a, b);
    }
    return rot;
}

/// Response rotation: a single full random orthonormal block, so every
/// response loads on the informative latent component.
inline Matrix rotation_y(int m, Rng& rng) {
    require(m >= 1, "m must be >= 1");
    return detail::random_orthonormal(m, rng);
}

/// Composes the latent covariances and rotations into the population joint
/// model of the design (Sigma blocks, true coefficients, variance scales).
inline PopulationModel assemble_population(const SimDesign& design, Rng& rng) {
    design.validate();
    const int p = design.p;
    const int m = design.m;

    PopulationModel pop;
    pop.lambda = predictor_eigenvalues(p, design.gamma);
    pop.kappa = response_eigenvalues(m, design.eta);

    const Vector sigma = latent_cross_covariance(pop.lambda, pop.kappa[0], design.relpos,
                                                 design.r2, rng);
    pop.sigma_zw = Matrix::Zero(p, m);
    pop.sigma_zw.col(0) = sigma;

    pop.rot_x = block_rotation_x(p, design.relpos, rng);
    pop.rot_y = rotation_y(m, rng);

    pop.sigma_xx = pop.rot_x * pop.lambda.asDiagonal() * pop.rot_x.transpose();
    pop.sigma_yy = pop.rot_y * pop.kappa.asDiagonal() * pop.rot_y.transpose();
    pop.sigma_xy = pop.rot_x * pop.sigma_zw * pop.rot_y.transpose();
    pop.beta_true =
        pop.rot_x * pop.lambda.cwiseInverse().asDiagonal() * pop.sigma_zw * pop.rot_y.transpose();

    pop.sigma2_y = pop.sigma_yy.diagonal();
    const Matrix conditional =
        pop.sigma_yy - pop.sigma_xy.transpose() * pop.beta_true;  // Sigma_yy - Sigma_yx b
    pop.sigma2_eps = conditional.diagonal();
    for (Index j = 0; j < m; ++j)
        if (!(pop.sigma2_eps[j] > 0.0))
            throw std::runtime_error("nonpositive conditional response variance");

    // Joint latent covariance of (w, z) and its lower factor:
    //   [ diag(kappa)   sigma_zw^T ]
    //   [ sigma_zw      diag(lambda) ]
    // L11 = diag(sqrt kappa); L21 nonzero only in column 1 (the informative
    // component); L22 = chol(diag(lambda) - sigma sigma^T / kappa1), which is
    // diagonal outside the relpos block.
    std::vector<int> rel = design.relpos;
    std::sort(rel.begin(), rel.end());
    pop.relpos = rel;
    const int nrel = static_cast<int>(rel.size());

    Matrix coupled(1 + nrel, 1 + nrel);  // informative component against relpos block
    coupled(0, 0) = pop.kappa[0];
    for (int a = 0; a < nrel; ++a) {
        coupled(0, a + 1) = sigma[rel[a] - 1];
        coupled(a + 1, 0) = sigma[rel[a] - 1];
        for (int b = 0; b < nrel; ++b)
            coupled(a + 1, b + 1) = (a == b) ? pop.lambda[rel[a] - 1] : 0.0;
    }
    Eigen::LLT<Matrix> coupled_llt(coupled);
    if (coupled_llt.info() != Eigen::Success)
        throw std::runtime_error("joint covariance is not positive definite (design " +
                                 std::to_string(design.design_id) + ")");

    Matrix schur_block(nrel, nrel);  // diag(lambda_S) - sigma_S sigma_S^T / kappa1
    for (int a = 0; a < nrel; ++a)
        for (int b = 0; b < nrel; ++b)
            schur_block(a, b) = ((a == b) ? pop.lambda[rel[a] - 1] : 0.0) -
                                sigma[rel[a] - 1] * sigma[rel[b] - 1] / pop.kappa[0];
    Eigen::LLT<Matrix> schur_llt(schur_block);
    if (schur_llt.info() != Eigen::Success)
        throw std::runtime_error("joint covariance is not positive definite (design " +
                                 std::to_string(design.design_id) + ")");
    const Matrix schur_l = schur_llt.matrixL();

    pop.latent_chol = Matrix::Zero(m + p, m + p);
    for (Index j = 0; j < m; ++j) pop.latent_chol(j, j) = std::sqrt(pop.kappa[j]);
    for (int i = 0; i < p; ++i) pop.latent_chol(m + i, m + i) = std::sqrt(pop.lambda[i]);
    const double sqrt_kappa1 = std::sqrt(pop.kappa[0]);
    for (int a = 0; a < nrel; ++a) {
        pop.latent_chol(m + rel[a] - 1, 0) = sigma[rel[a] - 1] / sqrt_kappa1;
        for (int b = 0; b <= a; ++b)
            pop.latent_chol(m + rel[a] - 1, m + rel[b] - 1) = schur_l(a, b);
    }
    return pop;
}

/// Eigenvalues of the (m+p) x (m+p) joint covariance, computed from the
/// latent block structure: the rotations leave them unchanged, and only the
/// informative component couples to the relpos block.
inline Vector joint_covariance_eigenvalues(const PopulationModel& pop) {
    const Index m = pop.kappa.size();
    const Index p = pop.lambda.size();
    const int nrel = static_cast<int>(pop.relpos.size());

    Matrix coupled(1 + nrel, 1 + nrel);
    coupled.setZero();
    coupled(0, 0) = pop.kappa[0];
    for (int a = 0; a < nrel; ++a) {
        const double s = pop.sigma_zw(pop.relpos[a] - 1, 0);
        coupled(0, a + 1) = s;
        coupled(a + 1, 0) = s;
        coupled(a + 1, a + 1) = pop.lambda[pop.relpos[a] - 1];
    }
    Eigen::SelfAdjointEigenSolver<Matrix> eig(coupled);

    Vector values(m + p);
    Index k = 0;
    for (Index i = 0; i < 1 + nrel; ++i) values[k++] = eig.eigenvalues()[i];
    for (Index j = 1; j < m; ++j) values[k++] = pop.kappa[j];
    std::vector<char> is_rel(p, 0);
    for (int idx : pop.relpos) is_rel[idx - 1] = 1;
    for (Index i = 0; i < p; ++i)
        if (!is_rel[i]) values[k++] = pop.lambda[i];
    std::sort(values.data(), values.data() + values.size());
    return values;
}

/// Draws n observations of the joint normal vector (y, x) and splits them:
/// each observation multiplies an (m+p)-dimensional standard normal draw by
/// the lower-triangular latent factor and rotates the two blocks.
inline SimDataset sample_dataset(const PopulationModel& model, int n, Rng& rng) {
    require(n >= 1, "sample count must be >= 1");
    const Index m = model.sigma_yy.rows();
    const Index p = model.sigma_xx.rows();
    SimDataset data;
    data.y.resize(n, m);
    data.x.resize(n, p);
    Vector z(m + p);
    for (int i = 0; i < n; ++i) {
        for (Index k = 0; k < m + p; ++k) z[k] = rng.next_normal();
        const Vector latent = model.latent_chol.triangularView<Eigen::Lower>() * z;
        data.y.row(i) = (model.rot_y * latent.head(m)).transpose();
        data.x.row(i) = (model.rot_x * latent.tail(p)).transpose();
    }
    return data;
}

}  // namespace mrest
