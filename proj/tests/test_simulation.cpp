#include "mrest/simulation.hpp"

#include "oracles.hpp"

#include <catch2/catch.hpp>

#include <set>
#include <tuple>

#include <Eigen/Eigenvalues>

using namespace mrest;

TEST_CASE("predictor eigenvalues decay exponentially") {
    const Vector lambda = predictor_eigenvalues(20, 0.9);
    CHECK(lambda[0] == 1.0);
    // exp(-0.9) to full double precision, frozen from an independent
    // arbitrary-precision evaluation.
    CHECK(lambda[1] == Approx(0.406569659740599111883454239646).margin(1e-15));
    for (int i = 1; i < 20; ++i) {
        CHECK(lambda[i] > 0.0);
        CHECK(lambda[i] <= lambda[i - 1]);
    }
    CHECK(predictor_eigenvalues(7, 0.0).isApprox(Vector::Ones(7)));
    CHECK(predictor_eigenvalues(5, 0.2)[0] == 1.0);
    CHECK_THROWS_AS(predictor_eigenvalues(0, 0.5), std::invalid_argument);
    CHECK_THROWS_AS(predictor_eigenvalues(5, -0.1), std::invalid_argument);
}

TEST_CASE("response eigenvalues decay exponentially") {
    CHECK(response_eigenvalues(4, 0.0).isApprox(Vector::Ones(4)));
    const Vector kappa = response_eigenvalues(4, 1.2);
    // exp(-1.2), same independent evaluation.
    CHECK(kappa[1] == Approx(0.301194211912202096644977607083).margin(1e-15));
    CHECK(response_eigenvalues(1, 77.0)[0] == 1.0);
    CHECK_THROWS_AS(response_eigenvalues(4, -0.4), std::invalid_argument);
    CHECK_THROWS_AS(response_eigenvalues(0, 0.4), std::invalid_argument);
}

TEST_CASE("latent cross-covariance hits the target R2 exactly") {
    SECTION("single relevant component forces sigma^2 = r2 lambda kappa") {
        Rng rng(42);
        const Vector sigma = latent_cross_covariance(Vector::Ones(1), 1.0, {1}, 0.8, rng);
        CHECK(sigma[0] * sigma[0] == Approx(0.8).margin(1e-12));
    }
    SECTION("R2 identity holds for any draw") {
        const Vector lambda = predictor_eigenvalues(20, 0.9);
        for (std::uint64_t seed : {1ULL, 2ULL, 99ULL, 12345ULL}) {
            Rng rng(seed);
            const Vector sigma = latent_cross_covariance(lambda, 1.0, {5, 6, 7, 8}, 0.8, rng);
            double r2 = 0.0;
            for (int i = 0; i < 20; ++i) r2 += sigma[i] * sigma[i] / lambda[i];
            CHECK(r2 == Approx(0.8).margin(1e-12));
            for (int i : {0, 1, 2, 3, 8, 15, 19}) CHECK(sigma[i] == 0.0);
            for (int i : {4, 5, 6, 7}) CHECK(sigma[i] != 0.0);
        }
    }
    SECTION("r2 = 0 gives no cross-covariance") {
        Rng rng(7);
        CHECK(latent_cross_covariance(Vector::Ones(4), 1.0, {1, 2}, 0.0, rng).norm() == 0.0);
    }
    SECTION("invalid inputs rejected") {
        Rng rng(7);
        CHECK_THROWS_AS(latent_cross_covariance(Vector::Ones(4), 1.0, {1}, 1.0, rng),
                        std::invalid_argument);
        CHECK_THROWS_AS(latent_cross_covariance(Vector::Ones(4), 1.0, {5}, 0.5, rng),
                        std::invalid_argument);
    }
}

TEST_CASE("predictor rotation is block-orthonormal") {
    SECTION("1x1") {
        Rng rng(3);
        const Matrix r = block_rotation_x(1, {1}, rng);
        CHECK(std::abs(std::abs(r(0, 0)) - 1.0) < 1e-12);
    }
    SECTION("orthonormal with zeros across blocks") {
        Rng rng(11);
        const Matrix r = block_rotation_x(9, {2, 5, 6}, rng);
        CHECK((r.transpose() * r - Matrix::Identity(9, 9)).cwiseAbs().maxCoeff() < 1e-10);
        const std::vector<int> rel = {2, 5, 6};
        for (int i = 1; i <= 9; ++i)
            for (int j = 1; j <= 9; ++j) {
                const bool i_rel = std::find(rel.begin(), rel.end(), i) != rel.end();
                const bool j_rel = std::find(rel.begin(), rel.end(), j) != rel.end();
                if (i_rel != j_rel) CHECK(r(i - 1, j - 1) == 0.0);
            }
    }
    SECTION("deterministic given the seed") {
        Rng a(5), b(5);
        const Matrix ra = block_rotation_x(6, {1, 2}, a);
        const Matrix rb = block_rotation_x(6, {1, 2}, b);
        CHECK((ra.array() == rb.array()).all());
    }
}

TEST_CASE("response rotation spreads the informative component") {
    Rng rng(13);
    const Matrix r = rotation_y(4, rng);
    CHECK((r.transpose() * r - Matrix::Identity(4, 4)).cwiseAbs().maxCoeff() < 1e-10);
    Rng single(2);
    const Matrix r1 = rotation_y(1, single);
    CHECK(std::abs(std::abs(r1(0, 0)) - 1.0) < 1e-12);
    // Every response should load on the informative latent component.
    for (std::uint64_t seed : {10ULL, 20ULL, 30ULL, 40ULL}) {
        Rng s(seed);
        const Matrix rot = rotation_y(4, s);
        for (int j = 0; j < 4; ++j) CHECK(std::abs(rot(j, 0)) > 1e-6);
    }
}

namespace {

SimDesign tiny_design(int p, double gamma, double eta, std::vector<int> relpos, double r2) {
    SimDesign d;
    d.design_id = 1;
    d.p = p;
    d.n = 100;
    d.m = 4;
    d.gamma = gamma;
    d.eta = eta;
    d.relpos = std::move(relpos);
    d.r2 = r2;
    d.base_seed = 99;
    return d;
}

}  // namespace

TEST_CASE("population assembly composes the covariance blocks") {
    SECTION("no relevant information when r2 = 0") {
        SimDesign d = tiny_design(6, 0.0, 0.0, {1}, 0.0);
        d.m = 3;
        Rng rng(4);
        const PopulationModel pop = assemble_population(d, rng);
        CHECK(pop.sigma_xy.norm() == 0.0);
        CHECK(pop.beta_true.norm() == 0.0);
    }
    SECTION("normal equations hold against an independent dense solve") {
        const SimDesign d = tiny_design(20, 0.2, 0.0, {1, 2, 3, 4}, 0.8);
        Rng rng(123);
        const PopulationModel pop = assemble_population(d, rng);
        CHECK((pop.sigma_xx * pop.beta_true - pop.sigma_xy).cwiseAbs().maxCoeff() < 1e-8);
        const Matrix beta_solve = pop.sigma_xx.fullPivLu().solve(pop.sigma_xy);
        CHECK((beta_solve - pop.beta_true).cwiseAbs().maxCoeff() < 1e-6);
    }
}

TEST_CASE("grid population invariants") {
    for (const SimDesign& d : design_grid(2024)) {
        Rng rng(mix_seed(d.base_seed, {static_cast<std::uint64_t>(d.design_id)}));
        const PopulationModel pop = assemble_population(d, rng);

        // Latent R2 identity.
        double r2 = 0.0;
        for (int i = 0; i < d.p; ++i)
            r2 += pop.sigma_zw(i, 0) * pop.sigma_zw(i, 0) / pop.lambda[i];
        r2 /= pop.kappa[0];
        CHECK(r2 == Approx(0.8).margin(1e-10));

        // Positive definiteness. The analytic joint eigenvalues must be
        // positive for every design; the wide designs span ~100 orders of
        // magnitude, so the scaled 1e-12 floor is only meaningful for
        // p = 20, where the dense spectrum confirms it.
        const Vector joint = joint_covariance_eigenvalues(pop);
        CHECK(joint.minCoeff() > 0.0);
        if (d.p == 20) {
            Matrix dense(d.m + d.p, d.m + d.p);
            dense.topLeftCorner(d.m, d.m) = pop.sigma_yy;
            dense.topRightCorner(d.m, d.p) = pop.sigma_xy.transpose();
            dense.bottomLeftCorner(d.p, d.m) = pop.sigma_xy;
            dense.bottomRightCorner(d.p, d.p) = pop.sigma_xx;
            Eigen::SelfAdjointEigenSolver<Matrix> eig(dense);
            CHECK(eig.eigenvalues().minCoeff() / eig.eigenvalues().maxCoeff() > 1e-12);
        }

        // Relevance confinement: one informative response component, nonzero
        // only at the relpos rows.
        for (Index j = 1; j < pop.sigma_zw.cols(); ++j) CHECK(pop.sigma_zw.col(j).norm() == 0.0);
        for (int i = 1; i <= d.p; ++i) {
            const bool rel = std::find(d.relpos.begin(), d.relpos.end(), i) != d.relpos.end();
            if (!rel) CHECK(pop.sigma_zw(i - 1, 0) == 0.0);
        }

        // Rotation invariance of total variance.
        CHECK(pop.sigma_xx.trace() == Approx(pop.lambda.sum()).margin(1e-10));
        CHECK(pop.sigma_yy.trace() == Approx(pop.kappa.sum()).margin(1e-10));

        // Orthonormal rotations.
        CHECK((pop.rot_x.transpose() * pop.rot_x - Matrix::Identity(d.p, d.p))
                  .cwiseAbs()
                  .maxCoeff() < 1e-10);
        CHECK((pop.rot_y.transpose() * pop.rot_y - Matrix::Identity(d.m, d.m))
                  .cwiseAbs()
                  .maxCoeff() < 1e-10);

        // Variance scales.
        for (int j = 0; j < d.m; ++j) {
            CHECK(pop.sigma2_y[j] == pop.sigma_yy(j, j));
            CHECK(pop.sigma2_eps[j] > 0.0);
        }
    }
}

TEST_CASE("population assembly is deterministic") {
    const SimDesign d = tiny_design(12, 0.5, 0.4, {2, 5}, 0.7);
    Rng a(77), b(77);
    const PopulationModel pa = assemble_population(d, a);
    const PopulationModel pb = assemble_population(d, b);
    CHECK((pa.sigma_xx.array() == pb.sigma_xx.array()).all());
    CHECK((pa.sigma_xy.array() == pb.sigma_xy.array()).all());
    CHECK((pa.beta_true.array() == pb.beta_true.array()).all());
    CHECK((pa.latent_chol.array() == pb.latent_chol.array()).all());
}

TEST_CASE("dataset sampling") {
    const SimDesign d = tiny_design(10, 0.5, 0.3, {1, 2}, 0.7);
    Rng rng(5);
    const PopulationModel pop = assemble_population(d, rng);

    SECTION("empty samples rejected") {
        Rng r(1);
        CHECK_THROWS_AS(sample_dataset(pop, 0, r), std::invalid_argument);
    }
    SECTION("bit-identical under the same seed") {
        Rng a(9), b(9);
        const SimDataset da = sample_dataset(pop, 50, a);
        const SimDataset db = sample_dataset(pop, 50, b);
        CHECK((da.x.array() == db.x.array()).all());
        CHECK((da.y.array() == db.y.array()).all());
    }
    SECTION("law of large numbers: sample covariance approaches Sigma_xx") {
        Rng r(31);
        const SimDataset data = sample_dataset(pop, 100000, r);
        const Matrix centered = data.x.rowwise() - data.x.colwise().mean();
        const Matrix sxx = centered.transpose() * centered / (data.x.rows() - 1.0);
        CHECK((sxx - pop.sigma_xx).norm() / pop.sigma_xx.norm() < 0.05);
        const Matrix centered_y = data.y.rowwise() - data.y.colwise().mean();
        const Matrix sxy = centered.transpose() * centered_y / (data.x.rows() - 1.0);
        CHECK((sxy - pop.sigma_xy).norm() / pop.sigma_xy.norm() < 0.05);
    }
}

TEST_CASE("design grid is the complete 32-cell factorial") {
    const std::vector<SimDesign> grid = design_grid();
    REQUIRE(grid.size() == 32);
    std::set<std::tuple<int, double, double, std::string>> combos;
    for (const auto& d : grid) {
        CHECK(d.n == 100);
        CHECK(d.m == 4);
        CHECK(d.r2 == 0.8);
        combos.insert({d.p, d.gamma, d.eta, format_relpos(d.relpos)});
    }
    CHECK(combos.size() == 32);

    // Enumeration: (eta, relpos, gamma, p) lexicographic with p fastest.
    CHECK(grid[0].p == 20);
    CHECK(grid[0].gamma == 0.2);
    CHECK(grid[0].eta == 0.0);
    CHECK(format_relpos(grid[0].relpos) == "1:4");
    CHECK(grid[1].p == 250);
    CHECK(grid[2].gamma == 0.9);
    CHECK(format_relpos(grid[4].relpos) == "5:8");
    CHECK(grid[8].eta == 0.4);
    CHECK(grid[31].p == 250);
    CHECK(grid[31].gamma == 0.9);
    CHECK(grid[31].eta == 1.2);
    CHECK(format_relpos(grid[31].relpos) == "5:8");

    // The two reference designs, located by factor levels.
    const auto nine_like = match_designs(grid, 20, 0.9, 0.0, {5, 6, 7, 8});
    REQUIRE(nine_like.size() == 1);
    const auto twentynine_like = match_designs(grid, 20, 0.9, 1.2, {5, 6, 7, 8});
    REQUIRE(twentynine_like.size() == 1);
    CHECK(nine_like[0] != twentynine_like[0]);
}

TEST_CASE("relpos formatting round-trips") {
    CHECK(format_relpos({1, 2, 3, 4}) == "1:4");
    CHECK(format_relpos({5, 6, 7, 8}) == "5:8");
    CHECK(format_relpos({1, 3, 7}) == "1;3;7");
    CHECK(parse_relpos("5:8") == std::vector<int>({5, 6, 7, 8}));
    CHECK(parse_relpos("1;3;7") == std::vector<int>({1, 3, 7}));
}
