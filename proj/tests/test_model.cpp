#include <cmath>

#include "doctest.h"
#include "dpmix/model.hpp"
#include "test_util.hpp"

using namespace dpmix;
using namespace dpmix::testutil;

namespace {

// Composite Simpson over [lo, hi]; test-side oracle for density mass.
double integrate_density(const Mixture& m, double lo, double hi, long n) {
    if (n % 2) ++n;
    const double h = (hi - lo) / static_cast<double>(n);
    Eigen::VectorXd x(1);
    auto f = [&](double t) {
        x(0) = t;
        return m.density(x);
    };
    double acc = f(lo) + f(hi);
    for (long i = 1; i < n; ++i) acc += f(lo + h * static_cast<double>(i)) * (i % 2 ? 4.0 : 2.0);
    return acc * h / 3.0;
}

}  // namespace

TEST_CASE("gaussian_create caches the factorization") {
    const Gaussian std1 = g1d(0.0, 1.0);
    CHECK(std1.chol()(0, 0) == doctest::Approx(1.0));

    Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd cov = 2.0 * Eigen::MatrixXd::Identity(2, 2);
    const Gaussian g = gaussian_create(mu, cov);
    CHECK(g.chol()(0, 0) == doctest::Approx(std::sqrt(2.0)));
    CHECK(g.chol()(1, 1) == doctest::Approx(std::sqrt(2.0)));
    CHECK(g.chol()(0, 1) == doctest::Approx(0.0));
}

TEST_CASE("gaussian_create rejects bad covariance") {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
    Eigen::MatrixXd indefinite(2, 2);
    indefinite << 1.0, 2.0, 2.0, 1.0;  // eigenvalues 3 and -1
    CHECK_THROWS_AS(gaussian_create(mu, indefinite), NotPositiveDefinite);

    Eigen::MatrixXd asym(2, 2);
    asym << 1.0, 0.2, 0.1, 1.0;
    CHECK_THROWS_AS(gaussian_create(mu, asym), AsymmetricCovariance);
}

TEST_CASE("log_density matches closed forms") {
    const Gaussian std1 = g1d(0.0, 1.0);
    Eigen::VectorXd x(1);
    x << 0.0;
    const double log2pi = std::log(2.0 * M_PI);
    CHECK(std1.log_density(x) == doctest::Approx(-0.5 * log2pi).epsilon(1e-12));
    x << 1.0;
    CHECK(std1.log_density(x) == doctest::Approx(-0.5 * log2pi - 0.5).epsilon(1e-12));

    const Mixture mix = mix1d({0.5, 0.5}, {{0.0, 1.0}, {10.0, 1.0}});
    x << 0.0;
    const double direct = std::log(0.5 * std::exp(-0.5 * log2pi) +
                                   0.5 * std::exp(-0.5 * log2pi - 50.0));
    CHECK(mix.log_density(x) == doctest::Approx(direct).epsilon(1e-12));

    Eigen::VectorXd wrong(2);
    wrong << 0.0, 0.0;
    CHECK_THROWS_AS(std1.log_density(wrong), DimensionMismatch);
}

TEST_CASE("mixture log density survives far tails") {
    const Mixture mix = mix1d({0.5, 0.5}, {{0.0, 1.0}, {1.0, 1.0}});
    Eigen::VectorXd x(1);
    x << 40.0;  // 40 sigma out
    CHECK(std::isfinite(mix.log_density(x)));
}

TEST_CASE("sampling basics and determinism") {
    const Gaussian std1 = g1d(0.0, 1.0);
    RngStream rng0(7);
    CHECK(sample(std1, 0, rng0).points.empty());

    RngStream rng1(42);
    const Dataset d1 = sample(std1, 100000, rng1);
    double mean = 0.0;
    for (const auto& p : d1.points) mean += p(0);
    mean /= static_cast<double>(d1.size());
    double var = 0.0;
    for (const auto& p : d1.points) var += (p(0) - mean) * (p(0) - mean);
    var /= static_cast<double>(d1.size());
    CHECK(std::abs(mean) < 0.02);
    CHECK(std::abs(var - 1.0) < 0.05);

    RngStream rng2(42);
    const Dataset d2 = sample(std1, 100000, rng2);
    for (size_t i = 0; i < d1.size(); ++i) CHECK(d1.points[i](0) == d2.points[i](0));
    CHECK(d1.seed == 42);
}

TEST_CASE("mixture sampling hits component weights") {
    const Mixture mix = mix1d({0.3, 0.7}, {{0.0, 1.0}, {100.0, 1.0}});
    RngStream rng(9);
    const Dataset d = sample(mix, 100000, rng);
    long low = 0;
    for (const auto& p : d.points) low += p(0) < 50.0;
    const double frac = static_cast<double>(low) / static_cast<double>(d.size());
    CHECK(std::abs(frac - 0.3) < 0.01);
}

TEST_CASE("affine_transform") {
    const Gaussian g = g1d(1.5, 2.0);
    const Gaussian same = affine_transform(g, Eigen::MatrixXd::Identity(1, 1),
                                           Eigen::VectorXd::Zero(1));
    CHECK(same.mean()(0) == doctest::Approx(1.5));
    CHECK(same.cov()(0, 0) == doctest::Approx(2.0));

    // N(0, I) mapped by (sqrt(Sigma), mu) lands on N(mu, Sigma).
    Eigen::VectorXd mu(2);
    mu << 1.0, -2.0;
    Eigen::MatrixXd cov(2, 2);
    cov << 2.0, 0.5, 0.5, 1.0;
    const Gaussian target(mu, cov);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    const Gaussian mapped = affine_transform(
        Gaussian(Eigen::VectorXd::Zero(2), Eigen::MatrixXd::Identity(2, 2)), es.operatorSqrt(),
        mu);
    RngStream rng(3);
    for (int i = 0; i < 100; ++i) {
        Eigen::VectorXd x(2);
        x << rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0);
        CHECK(mapped.log_density(x) == doctest::Approx(target.log_density(x)).epsilon(1e-9));
    }

    CHECK_THROWS_AS(affine_transform(g, Eigen::MatrixXd::Zero(1, 1), Eigen::VectorXd::Zero(1)),
                    SingularTransform);
}

TEST_CASE("dense_decompose") {
    const Mixture all_dense = mix1d({0.5, 0.5}, {{0.0, 1.0}, {3.0, 1.0}});
    const DenseDecomposition d0 = dense_decompose(all_dense, 2, 0.3);
    CHECK(d0.gamma == 0.0);
    CHECK(!d0.residual.has_value());
    CHECK(d0.dense_part.size() == 2);

    const Mixture m = mix1d({0.5, 0.45, 0.05}, {{0.0, 1.0}, {2.0, 1.0}, {4.0, 1.0}});
    const DenseDecomposition d = dense_decompose(m, 3, 0.3);
    CHECK(d.gamma == doctest::Approx(0.05).epsilon(1e-12));
    REQUIRE(d.dense_part.size() == 2);
    CHECK(d.dense_part.weights()(0) == doctest::Approx(0.5 / 0.95).epsilon(1e-12));
    CHECK(d.dense_part.weights()(1) == doctest::Approx(0.45 / 0.95).epsilon(1e-12));
    REQUIRE(d.residual.has_value());

    // Reconstruction: gamma * residual + (1 - gamma) * dense == input.
    RngStream rng(11);
    for (int trial = 0; trial < 100; ++trial) {
        const int s = 1 + static_cast<int>(rng.uniform_int(4));
        Eigen::VectorXd w(s);
        double sum = 0.0;
        for (int i = 0; i < s; ++i) {
            w(i) = rng.uniform_open();
            sum += w(i);
        }
        w /= sum;
        std::vector<Gaussian> gs;
        for (int i = 0; i < s; ++i) gs.push_back(g1d(rng.uniform(-3, 3), rng.uniform(0.5, 2.0)));
        const Mixture mm(w, gs);
        const double alpha = rng.uniform(0.05, 0.9);
        const DenseDecomposition dd = dense_decompose(mm, s, alpha);
        std::vector<double> recombined(static_cast<size_t>(s), 0.0);
        auto add = [&](const Mixture& part, double scale) {
            for (int i = 0; i < part.size(); ++i) {
                const double mean = part.component(i).mean()(0);
                for (int j = 0; j < s; ++j) {
                    if (mean == mm.component(j).mean()(0)) {
                        recombined[static_cast<size_t>(j)] += scale * part.weights()(i);
                        break;
                    }
                }
            }
        };
        add(dd.dense_part, 1.0 - dd.gamma);
        if (dd.residual) add(*dd.residual, dd.gamma);
        for (int j = 0; j < s; ++j) {
            CHECK(recombined[static_cast<size_t>(j)] == doctest::Approx(mm.weights()(j)).epsilon(1e-12));
        }
        CHECK(dd.gamma < alpha);
    }
}

TEST_CASE("gaussian_delta") {
    const Gaussian a = g1d(0.0, 1.0);
    CHECK(gaussian_delta(a, a) == doctest::Approx(0.0));
    CHECK(gaussian_delta(a, g1d(0.1, 1.0)) == doctest::Approx(0.1).epsilon(1e-12));
    CHECK(gaussian_delta(a, g1d(0.0, 2.0)) == doctest::Approx(1.0).epsilon(1e-12));

    // Asymmetric by construction.
    const Gaussian b = g1d(0.0, 4.0);
    CHECK(gaussian_delta(a, b) != doctest::Approx(gaussian_delta(b, a)).epsilon(1e-9));

    Eigen::VectorXd mu2 = Eigen::VectorXd::Zero(2);
    const Gaussian g2(mu2, Eigen::MatrixXd::Identity(2, 2));
    CHECK_THROWS_AS(gaussian_delta(a, g2), DimensionMismatch);
}

TEST_CASE("density normalization by quadrature") {
    RngStream rng(5);
    for (int i = 0; i < 20; ++i) {
        const double mean = rng.uniform(-5.0, 5.0);
        const double var = rng.uniform(0.3, 3.0);
        const Mixture m = m1d(mean, var);
        const double sd = std::sqrt(var);
        const double mass = integrate_density(m, mean - 12.0 * sd, mean + 12.0 * sd, 20000);
        CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("model json schema round-trips") {
    const Mixture m = mix1d({0.25, 0.75}, {{0.0, 1.0}, {3.5, 0.8}});
    const json j = to_json(m);
    REQUIRE(j.contains("weights"));
    REQUIRE(j.contains("components"));
    REQUIRE(j["components"][0].contains("mean"));
    REQUIRE(j["components"][0].contains("cov"));
    const Mixture back = mixture_from_json(j);
    CHECK(to_json(back) == j);

    // Single Gaussian serializes as a 1-component mixture.
    const json jg = to_json(g1d(1.0, 2.0));
    CHECK(jg["weights"].size() == 1);
    CHECK(jg["weights"][0].get<double>() == 1.0);

    json bad = j;
    bad["weights"][0] = 0.1;  // sums to 0.85
    CHECK_THROWS_AS(mixture_from_json(bad), Error);
}
