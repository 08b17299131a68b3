#include "mrest/envelope.hpp"

#include "mrest/estimators.hpp"
#include "oracles.hpp"

#include <catch2/catch.hpp>

using namespace mrest;

TEST_CASE("objective is basis-invariant at full dimension") {
    const Matrix m = oracle::random_spd(5, 61);
    const Matrix u = oracle::random_spd(5, 62, 0.0);
    const EnvelopeResult full = envelope_basis(m, u, 5);
    auto logdet = [](const Matrix& s) {
        return std::log(s.determinant());
    };
    CHECK(full.objective == Approx(logdet(m) - logdet(m + u)).margin(1e-9));
    CHECK((full.basis.transpose() * full.basis - Matrix::Identity(5, 5)).cwiseAbs().maxCoeff() <
          1e-8);
}

TEST_CASE("2-dimensional instances match a grid-search oracle") {
    SECTION("u_mat concentrated on the first coordinate") {
        Matrix m = Matrix::Zero(2, 2);
        m(0, 0) = 1.0;
        m(1, 1) = 1.5;
        Matrix u = Matrix::Zero(2, 2);
        u(0, 0) = 2.0;
        const EnvelopeResult res = envelope_basis(m, u, 1);
        const auto grid = oracle::envelope_grid_search_2d(m, u, 20000);
        CHECK(res.objective <= grid.value + 1e-9);
        // The minimizer is the first coordinate axis, up to sign.
        CHECK(std::abs(std::abs(res.basis(0, 0)) - 1.0) < 1e-6);
        CHECK(std::abs(res.basis(1, 0)) < 1e-6);
        CHECK(std::abs(std::abs(grid.direction.dot(res.basis.col(0))) - 1.0) < 1e-6);
    }
    SECTION("u_mat = 0 never beats the grid") {
        for (std::uint64_t seed : {71ULL, 72ULL, 73ULL}) {
            const Matrix m = oracle::random_spd(2, seed);
            const Matrix u = Matrix::Zero(2, 2);
            const EnvelopeResult res = envelope_basis(m, u, 1);
            const auto grid = oracle::envelope_grid_search_2d(m, u, 20000);
            CHECK(res.objective <= grid.value + 1e-9);
        }
    }
    SECTION("general 2x2 instances attain the grid minimum") {
        for (std::uint64_t seed : {81ULL, 82ULL, 83ULL, 84ULL}) {
            const Matrix m = oracle::random_spd(2, seed);
            const Matrix u = oracle::random_spd(2, seed + 100, 0.0);
            const EnvelopeResult res = envelope_basis(m, u, 1);
            const auto grid = oracle::envelope_grid_search_2d(m, u, 20000);
            CHECK(res.objective <= grid.value + 1e-9);
        }
    }
}

TEST_CASE("envelope bases are semi-orthogonal and deterministic") {
    const Matrix m = oracle::random_spd(8, 91);
    const Matrix u = oracle::random_spd(8, 92, 0.0);
    for (int dim : {1, 3, 5}) {
        const EnvelopeResult a = envelope_basis(m, u, dim);
        const EnvelopeResult b = envelope_basis(m, u, dim);
        CHECK((a.basis.transpose() * a.basis - Matrix::Identity(dim, dim)).cwiseAbs().maxCoeff() <
              1e-8);
        CHECK((a.basis.array() == b.basis.array()).all());
        CHECK(a.converged);
    }
    SECTION("iteration cap returns best-so-far with a flag") {
        EnvelopeOptions opts;
        opts.max_sweeps = 0;
        const EnvelopeResult res = EnvelopeSolver(m, u, opts).solve(3);
        CHECK_FALSE(res.converged);
        CHECK(res.basis.cols() == 3);
    }
    SECTION("non-PD m_mat rejected") {
        Matrix bad = Matrix::Identity(4, 4);
        bad(2, 2) = -1.0;
        CHECK_THROWS_AS(envelope_basis(bad, Matrix::Zero(4, 4), 2), std::invalid_argument);
    }
}

namespace {

PopulationModel grid_population(int index_1based) {
    const std::vector<SimDesign> grid = design_grid();
    const SimDesign& d = grid[index_1based - 1];
    Rng rng(mix_seed(d.base_seed, {static_cast<std::uint64_t>(d.design_id)}));
    return assemble_population(d, rng);
}

}  // namespace

TEST_CASE("predictor envelope at the population recovers beta") {
    for (int id : {1, 7, 31}) {  // easy, 9-like, and the 29-like design
        const PopulationModel pop = grid_population(id);
        const Moments mom =
            moments_from_population(pop.sigma_xx, pop.sigma_xy, pop.sigma_yy);
        const XenvFit fit = fit_xenv(mom, 4);
        CHECK((fit.beta - pop.beta_true).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("predictor envelope edge cases") {
    SimDesign d;
    d.design_id = 1;
    d.p = 12;
    d.n = 80;
    d.m = 3;
    d.gamma = 0.4;
    d.eta = 0.2;
    d.relpos = {1, 2};
    d.r2 = 0.7;
    Rng rng(111);
    const PopulationModel pop = assemble_population(d, rng);
    Rng data_rng(112);
    const SimDataset data = sample_dataset(pop, 80, data_rng);
    const Moments mom = moments_from(center(data.x, data.y));

    SECTION("u = p equals least squares") {
        const XenvFit fit = fit_xenv(mom, 12);
        const Matrix ols = fit_ols(mom);
        CHECK((fit.beta - ols).cwiseAbs().maxCoeff() < 1e-6);
    }
    SECTION("no signal gives zero coefficients") {
        Moments dead = mom;
        dead.sxy.setZero();
        const XenvFit fit = fit_xenv(dead, 3);
        CHECK(fit.beta.norm() < 1e-12);
    }
    SECTION("singular response covariance rejected") {
        Matrix y_dup(data.y.rows(), 3);
        y_dup << data.y.col(0), data.y.col(0), data.y.col(1);
        const Moments bad = moments_from(center(data.x, y_dup));
        CHECK_THROWS_AS(fit_xenv(bad, 3), std::invalid_argument);
    }
    SECTION("dimension bounds") {
        CHECK_THROWS_AS(fit_xenv(mom, 0), std::invalid_argument);
        CHECK_THROWS_AS(fit_xenv(mom, 13), std::invalid_argument);
    }
}

TEST_CASE("simultaneous envelope") {
    SimDesign d;
    d.design_id = 1;
    d.p = 15;
    d.n = 90;
    d.m = 4;
    d.gamma = 0.6;
    d.eta = 0.8;
    d.relpos = {2, 3, 5};
    d.r2 = 0.8;
    Rng rng(221);
    const PopulationModel pop = assemble_population(d, rng);
    Rng data_rng(222);
    const SimDataset data = sample_dataset(pop, 90, data_rng);
    const Moments mom = moments_from(center(data.x, data.y));

    SECTION("d = m reduces to the predictor envelope") {
        for (int u : {1, 2, 4}) {
            const SenvFit senv = fit_senv(mom, u, 4);
            const XenvFit xenv = fit_xenv(mom, u);
            CHECK((senv.beta - xenv.beta).cwiseAbs().maxCoeff() < 1e-4);
        }
    }
    SECTION("u = p and d = m reduce to least squares") {
        const SenvFit senv = fit_senv(mom, 15, 4);
        const Matrix ols = fit_ols(mom);
        CHECK((senv.beta - ols).cwiseAbs().maxCoeff() < 1e-4);
    }
    SECTION("no signal gives zero coefficients") {
        Moments dead = mom;
        dead.sxy.setZero();
        const SenvFit senv = fit_senv(dead, 3, 2);
        CHECK(senv.beta.norm() < 1e-12);
    }
    SECTION("alternation objective is non-increasing") {
        for (int u : {1, 2, 3, 5}) {
            const SenvFit senv = fit_senv(mom, u, 2);
            REQUIRE(!senv.objective_trace.empty());
            for (std::size_t i = 1; i < senv.objective_trace.size(); ++i)
                CHECK(senv.objective_trace[i] <=
                      senv.objective_trace[i - 1] +
                          1e-9 * std::max(1.0, std::abs(senv.objective_trace[i - 1])));
        }
    }
    SECTION("basis shapes and orthonormality") {
        const SenvFit senv = fit_senv(mom, 3, 2);
        CHECK(senv.gamma.cols() == 3);
        CHECK(senv.phi.cols() == 2);
        CHECK((senv.gamma.transpose() * senv.gamma - Matrix::Identity(3, 3))
                  .cwiseAbs()
                  .maxCoeff() < 1e-8);
        CHECK((senv.phi.transpose() * senv.phi - Matrix::Identity(2, 2)).cwiseAbs().maxCoeff() <
              1e-8);
    }
}
