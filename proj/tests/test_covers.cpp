#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "dpmix/covers.hpp"
#include "test_util.hpp"

using namespace dpmix;
using namespace dpmix::testutil;

namespace {

GaussianBox small_box() {
    GaussianBox box;
    box.dim = 1;
    box.mean_bound = 1.5;
    box.eig_min = 0.5;
    box.eig_max = 2.0;
    return box;
}

double linf(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    return (a - b).lpNorm<Eigen::Infinity>();
}

Eigen::VectorXd random_simplex_point(int k, RngStream& rng) {
    Eigen::VectorXd w(k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
        w(i) = -std::log(rng.uniform_open());
        sum += w(i);
    }
    return w / sum;
}

}  // namespace

TEST_CASE("simplex cover basics and size bound") {
    const SimplexCover k1 = simplex_cover(1, 0.5);
    REQUIRE(k1.elements.size() == 1);
    CHECK(k1.elements[0](0) == doctest::Approx(1.0));

    RngStream rng(3);
    for (const auto& [k, alpha] : std::vector<std::pair<int, double>>{
             {1, 0.3}, {2, 0.5}, {2, 0.1}, {3, 0.2}, {4, 0.35}}) {
        const SimplexCover cover = simplex_cover(k, alpha);
        const double bound = std::pow(std::ceil(1.0 / alpha), k);
        CHECK(static_cast<double>(cover.elements.size()) <= bound);
        // Elements lie on the simplex.
        for (const auto& w : cover.elements) {
            CHECK(w.sum() == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(w.minCoeff() >= -1e-15);
        }
        // Pairwise distinct under serialization.
        std::set<std::string> keys;
        char buf[40];
        for (const auto& w : cover.elements) {
            std::string key;
            for (int i = 0; i < w.size(); ++i) {
                std::snprintf(buf, sizeof(buf), "%.17g,", w(i));
                key += buf;
            }
            CHECK(keys.insert(key).second);
        }
    }

    // Covering validity.
    const SimplexCover c2 = simplex_cover(2, 0.5);
    CHECK(c2.elements.size() <= 4);
    for (int i = 0; i <= 10000; ++i) {
        Eigen::VectorXd w(2);
        w << static_cast<double>(i) / 10000.0, 1.0 - static_cast<double>(i) / 10000.0;
        double best = 1e9;
        for (const auto& e : c2.elements) best = std::min(best, linf(w, e));
        CHECK(best <= 0.5 + 1e-12);
    }
    const SimplexCover c3 = simplex_cover(3, 0.2);
    CHECK(c3.elements.size() <= 125);
    for (int i = 0; i < 100000; ++i) {
        const Eigen::VectorXd w = random_simplex_point(3, rng);
        double best = 1e9;
        for (const auto& e : c3.elements) best = std::min(best, linf(w, e));
        CHECK(best <= 0.2 + 1e-12);
    }
}

TEST_CASE("simplex grid near-queries match the full enumeration") {
    RngStream rng(5);
    for (const auto& [k, alpha] : std::vector<std::pair<int, double>>{{2, 0.1}, {3, 0.25}}) {
        const SimplexGrid grid = simplex_grid(k, alpha);
        std::vector<Eigen::VectorXd> all;
        grid.for_each([&](const Eigen::VectorXd& w) { all.push_back(w); });
        for (int trial = 0; trial < 50; ++trial) {
            const Eigen::VectorXd w = random_simplex_point(k, rng);
            const double radius = rng.uniform(0.05, 0.5);
            const auto found = grid.near(w, radius);
            std::set<std::string> found_keys;
            for (const auto& f : found) {
                CHECK(linf(f, w) <= radius + 1e-12);
                std::string key;
                for (int i = 0; i < f.size(); ++i) key += std::to_string(f(i)) + ",";
                found_keys.insert(key);
            }
            std::set<std::string> expected_keys;
            for (const auto& e : all) {
                if (linf(e, w) <= radius + 1e-12) {
                    std::string key;
                    for (int i = 0; i < e.size(); ++i) key += std::to_string(e(i)) + ",";
                    expected_keys.insert(key);
                }
            }
            CHECK(found_keys == expected_keys);
        }
    }
}

TEST_CASE("ball cover requires valid radii and keeps elements near the ball") {
    const Gaussian center = g1d(0.0, 1.0);
    CHECK_THROWS_AS(gaussian_ball_cover(center, 0.01, 0.005), InvalidRadii);
    CHECK_THROWS_AS(gaussian_ball_cover(center, 0.001, 0.1), InvalidRadii);

    const double gamma = 1.0 / 600.0;
    const double alpha = 1.0 / 1200.0;
    const GaussianCover cover = gaussian_ball_cover(center, alpha, gamma);
    REQUIRE(cover.elements.size() > 10);
    for (const auto& e : cover.elements) {
        CHECK(tv_gaussian_1d_exact(center, e) <= gamma + alpha + 1e-12);
    }
}

namespace {

void check_ball_coverage(const Gaussian& center, double alpha, double gamma, uint64_t seed) {
    const GaussianCover cover = gaussian_ball_cover(center, alpha, gamma);
    RngStream rng(seed);
    const double sd = std::sqrt(center.cov()(0, 0));
    int accepted = 0;
    while (accepted < 200) {
        const Gaussian member =
            g1d(center.mean()(0) + rng.uniform(-1.0, 1.0) * 8.0 * gamma * sd,
                center.cov()(0, 0) * std::exp(rng.uniform(-1.0, 1.0) * 6.0 * gamma));
        if (tv_quadrature_1d(Mixture::single(center), Mixture::single(member), 1e-9) > gamma) {
            continue;
        }
        ++accepted;
        double best = 1e9;
        const Gaussian* arg = nullptr;
        for (const auto& e : cover.elements) {
            const double d = tv_gaussian_1d_exact(member, e);
            if (d < best) {
                best = d;
                arg = &e;
            }
        }
        REQUIRE(arg != nullptr);
        const double confirmed =
            tv_quadrature_1d(Mixture::single(member), Mixture::single(*arg), 1e-9);
        CHECK(confirmed <= alpha + 1e-9);
    }
}

}  // namespace

TEST_CASE("ball cover covers rejection-sampled members (standard center)") {
    check_ball_coverage(g1d(0.0, 1.0), 1.0 / 1200.0, 1.0 / 600.0, 11);
}

TEST_CASE("ball cover covers members after the affine transform (shifted center)") {
    check_ball_coverage(g1d(5.0, 4.0), 1.0 / 1200.0, 1.0 / 600.0, 13);
}

TEST_CASE("bounded cover: point box reduces to a single ball cover") {
    GaussianBox box;
    box.dim = 1;
    box.mean_bound = 0.0;
    box.eig_min = box.eig_max = 1.0;
    const double alpha = 1.0 / 1300.0;
    const GaussianCover tiled = bounded_gaussian_cover(box, alpha);
    const double gamma_ball = std::min(1.0 / 600.0, 2.0 * alpha);
    const GaussianCover ball = gaussian_ball_cover(g1d(0.0, 1.0), alpha, gamma_ball);
    REQUIRE(tiled.elements.size() == ball.elements.size());
    for (size_t i = 0; i < ball.elements.size(); ++i) {
        CHECK(tiled.elements[i].mean()(0) == ball.elements[i].mean()(0));
        CHECK(tiled.elements[i].cov()(0, 0) == ball.elements[i].cov()(0, 0));
    }
}

TEST_CASE("bounded cover over a real box: materialization, coverage, audit") {
    GaussianBox box;
    box.dim = 1;
    box.mean_bound = 10.0;
    box.eig_min = 0.5;
    box.eig_max = 2.0;
    const double alpha = 0.05;
    const GaussianCover cover = bounded_gaussian_cover(box, alpha);
    const GaussianLattice lat = gaussian_box_lattice(box, alpha);
    REQUIRE(static_cast<double>(cover.elements.size()) == lat.total_count());

    RngStream rng(17);
    const auto probes = sample_box_gaussians(box, 1000, rng);
    int confirmed = 0;
    for (size_t i = 0; i < probes.size(); ++i) {
        bool covered = false;
        long best_mi = -1, best_vi = -1;
        double best = 1e9;
        lat.for_each_near(probes[i], alpha, [&](long mi, long vi) {
            covered = true;
            const double d = tv_gaussian_1d_exact(probes[i], lat.element(mi, vi));
            if (d < best) {
                best = d;
                best_mi = mi;
                best_vi = vi;
            }
        });
        REQUIRE(covered);
        if (confirmed < 20) {
            ++confirmed;
            const double quad = tv_quadrature_1d(Mixture::single(probes[i]),
                                                 Mixture::single(lat.element(best_mi, best_vi)),
                                                 1e-9);
            CHECK(quad <= alpha + 1e-9);
        }
    }

    REQUIRE(cover.claimed_t.has_value());
    const auto audit = audit_local_smallness(cover, 2.0 * alpha, probes,
                                             [](const Gaussian& a, const Gaussian& b) {
                                                 return tv_gaussian_1d_exact(a, b);
                                             });
    CHECK(audit.violations.empty());
    CHECK(audit.max_ball_count <= static_cast<long>(*cover.claimed_t));
    CHECK(audit.max_ball_count > 0);
}

TEST_CASE("bounded cover enforces the element cap") {
    GaussianBox big;
    big.dim = 2;
    big.mean_bound = 10.0;
    big.eig_min = 0.5;
    big.eig_max = 2.0;
    CHECK_THROWS_AS(bounded_gaussian_cover(big, 0.05), InfeasibleBudget);

    BoundedCoverOptions opts;
    opts.element_cap = 10;
    CHECK_THROWS_AS(bounded_gaussian_cover(small_box(), 0.05, opts), InfeasibleBudget);
}

TEST_CASE("lattice near-queries are exact") {
    const GaussianLattice lat = gaussian_box_lattice(small_box(), 0.1);
    RngStream rng(23);
    for (int trial = 0; trial < 100; ++trial) {
        const Gaussian probe = g1d(rng.uniform(-1.7, 1.7), rng.uniform(0.45, 2.1));
        const double radius = rng.uniform(0.02, 0.35);
        std::set<std::pair<long, long>> found;
        lat.for_each_near(probe, radius, [&](long mi, long vi) { found.emplace(mi, vi); });
        std::set<std::pair<long, long>> expected;
        for (long mi = 0; mi < lat.mean_count; ++mi) {
            for (long vi = 0; vi < lat.var_count; ++vi) {
                if (tv_gaussian_1d_exact(probe, lat.element(mi, vi)) <= radius) {
                    expected.emplace(mi, vi);
                }
            }
        }
        CHECK(found == expected);
    }
}

TEST_CASE("dense mixture cover: count formula and trivial k=1") {
    GaussianCover comp;
    comp.alpha = 0.25;
    comp.metric = MetricTag::tv;
    comp.recipe = json{{"kind", "fixture"}};
    comp.elements = {g1d(0.0, 1.0), g1d(3.0, 1.0), g1d(6.0, 1.0)};

    const MixtureCover k1 = dense_mixture_cover(comp, 1, 0.25);
    REQUIRE(k1.elements.size() == comp.elements.size());
    for (const auto& m : k1.elements) {
        CHECK(m.size() == 1);
        CHECK(m.weights()(0) == 1.0);
    }

    const MixtureCover k2 = dense_mixture_cover(comp, 2, 0.25);
    const size_t w1 = simplex_cover(1, 0.25).elements.size();
    const size_t w2 = simplex_cover(2, 0.125).elements.size();
    CHECK(k2.elements.size() == 3 * w1 + 9 * w2);

    // Locality never mixes component counts.
    const Mixture single = k2.elements.front();
    REQUIRE(single.size() == 1);
    for (const auto& m : k2.elements) {
        if (m.size() == 2) {
            CHECK(std::isinf(kappa_mix_1d(single, m).value));
            break;
        }
    }
}

TEST_CASE("dense mixture cover covers random in-box mixtures") {
    const GaussianBox box = small_box();
    const double alpha = 0.4;
    const GaussianCover comp = bounded_gaussian_cover(box, alpha);
    const MixtureCover cover = dense_mixture_cover(comp, 2, alpha);

    RngStream rng(29);
    const GaussianMetric quad_oracle = [](const Gaussian& a, const Gaussian& b) {
        return tv_quadrature_1d(Mixture::single(a), Mixture::single(b), 1e-8);
    };
    for (int trial = 0; trial < 25; ++trial) {
        const int s = 1 + static_cast<int>(rng.uniform_int(2));
        const Mixture probe = random_mix1d(s, rng, 0.9 * box.mean_bound, box.eig_min + 0.05,
                                           box.eig_max - 0.05);
        double best = std::numeric_limits<double>::infinity();
        const Mixture* arg = nullptr;
        for (const auto& e : cover.elements) {
            const double d = kappa_mix_1d(probe, e).value;
            if (d < best) {
                best = d;
                arg = &e;
            }
        }
        REQUIRE(arg != nullptr);
        CHECK(best <= alpha + 1e-9);
        // Confirm the winner against the quadrature component oracle.
        CHECK(kappa_mix(probe, *arg, quad_oracle).value <= alpha + 1e-6);
    }
}

TEST_CASE("implicit dense lattice enumeration matches the materialized cover") {
    const GaussianBox box = small_box();
    const double alpha = 0.4;
    const GaussianCover comp = bounded_gaussian_cover(box, alpha);
    const MixtureCover cover = dense_mixture_cover(comp, 2, alpha);
    const GaussianLattice lat = gaussian_box_lattice(box, alpha);
    const DenseMixtureLattice dense = dense_mixture_lattice(lat, 2, alpha);

    CHECK(dense.total_count() == doctest::Approx(static_cast<double>(cover.elements.size())));

    RngStream rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        const int s = 1 + static_cast<int>(rng.uniform_int(2));
        const Mixture probe = random_mix1d(s, rng, 0.9 * box.mean_bound, box.eig_min + 0.05,
                                           box.eig_max - 0.05);
        const double radius = rng.uniform(0.2, 0.8);
        std::set<std::string> expected;
        for (const auto& e : cover.elements) {
            if (kappa_mix_1d(probe, e).value <= radius) expected.insert(canonical_key(e));
        }
        std::set<std::string> got;
        for (const auto& [key, hyp] : dense.enumerate_near(probe, radius)) {
            CHECK(kappa_mix_1d(probe, hyp).value <= radius + 1e-12);
            got.insert(key);
        }
        CHECK(got == expected);
    }
}

TEST_CASE("audit_local_smallness") {
    // gamma = 0 with probes off the grid counts nothing.
    const SimplexCover c = simplex_cover(2, 0.1);
    std::vector<Eigen::VectorXd> off;
    Eigen::VectorXd w(2);
    w << 0.333333333, 0.666666667;
    off.push_back(w);
    const auto zero = audit_local_smallness(c, 0.0, off, linf);
    CHECK(zero.max_ball_count == 0);

    RngStream rng(37);
    std::vector<Eigen::VectorXd> probes;
    for (int i = 0; i < 1000; ++i) probes.push_back(random_simplex_point(2, rng));
    const auto audit = audit_local_smallness(c, 0.2, probes, linf);
    CHECK(audit.max_ball_count <= 25);  // 0.2-ball in a 0.1 grid spans 5 cells per axis
    CHECK(audit.max_ball_count > 0);
}

TEST_CASE("cover recipes replay bit-exactly") {
    const SimplexCover s = simplex_cover(3, 0.2);
    CHECK(cover_to_json(replay_simplex_cover(s.recipe)) == cover_to_json(s));

    const GaussianCover ball = gaussian_ball_cover(g1d(0.5, 1.2), 8e-4, 1.5e-3);
    CHECK(cover_to_json(replay_gaussian_cover(ball.recipe)) == cover_to_json(ball));

    const GaussianCover boxc = bounded_gaussian_cover(small_box(), 0.3);
    CHECK(cover_to_json(replay_gaussian_cover(boxc.recipe)) == cover_to_json(boxc));

    const MixtureCover dense = dense_mixture_cover(boxc, 2, 0.3);
    CHECK(cover_to_json(replay_mixture_cover(dense.recipe)) == cover_to_json(dense));
}
