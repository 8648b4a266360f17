#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "dpmix/listdecode.hpp"
#include "test_util.hpp"

using namespace dpmix;
using namespace dpmix::testutil;

namespace {

double min_tv_to(const HypothesisList& list, const Gaussian& truth) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& item : list.items) {
        best = std::min(best, tv_gaussian_1d_exact(item.component(0), truth));
    }
    return best;
}

double min_kappa_to(const HypothesisList& list, const Mixture& truth) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& item : list.items) {
        best = std::min(best, kappa_mix_1d(item, truth).value);
    }
    return best;
}

}  // namespace

TEST_CASE("contamination sample count formula") {
    DecodeParams p;
    p.m = 10;
    p.beta = 0.05;
    p.gamma = 0.5;
    CHECK(contamination_sample_count(p) == 88);

    p.gamma = 0.0;
    p.m = 7;
    p.beta = 0.1;
    CHECK(contamination_sample_count(p) ==
          static_cast<long>(std::ceil(14.0 + 8.0 * std::log(10.0))));
}

TEST_CASE("decoder rejects undersized samples") {
    const Gaussian truth = g1d(0.0, 1.0);
    RngStream data_rng(1);
    const Dataset data = sample(truth, 10, data_rng);

    DecodeParams p;
    p.m = 10;
    p.subset_size = 12;  // larger than the data
    RngStream rng(2);
    CHECK_THROWS_AS(gaussian_list_decode(data, p, rng), InsufficientData);

    p.subset_size = 3;
    p.m = 50;
    CHECK_THROWS_AS(gaussian_list_decode(data, p, rng), InsufficientData);
}

TEST_CASE("decoder is deterministic and respects the budget") {
    const Gaussian truth = g1d(0.5, 1.5);
    RngStream data_rng(7);
    const Dataset data = sample(truth, 120, data_rng);

    DecodeParams p;
    p.m = 18;
    p.L_budget = 60;
    p.alpha = 0.1;
    p.grid_bits = 1;
    RngStream r1(9), r2(9);
    const HypothesisList a = gaussian_list_decode(data, p, r1);
    const HypothesisList b = gaussian_list_decode(data, p, r2);
    CHECK(static_cast<long>(a.items.size()) <= p.L_budget);
    REQUIRE(a.items.size() == b.items.size());
    for (size_t i = 0; i < a.items.size(); ++i) {
        CHECK(canonical_key(a.items[i]) == canonical_key(b.items[i]));
    }
    CHECK(a.manifest["mode"] == "exhaustive");
}

TEST_CASE("clean decoding hits the truth in most seeded trials") {
    const Gaussian truth = g1d(0.0, 1.0);
    DecodeParams p;
    p.m = 20;
    p.L_budget = 200000;
    p.alpha = 0.1;
    p.beta = 0.1;
    p.grid_bits = 1;

    int hits = 0;
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
        RngStream data_rng(derive_seed(100, static_cast<uint64_t>(trial)));
        const Dataset data = sample(truth, 200, data_rng);
        RngStream rng(derive_seed(200, static_cast<uint64_t>(trial)));
        const HypothesisList list = gaussian_list_decode(data, p, rng);
        const double best = min_tv_to(list, truth);
        worst = std::max(worst, best);
        hits += best <= p.alpha;
        if (trial < 3) {
            // Confirm the fast metric against the quadrature oracle.
            double arg_best = 1e9;
            const Mixture* arg = nullptr;
            for (const auto& item : list.items) {
                const double d = tv_gaussian_1d_exact(item.component(0), truth);
                if (d < arg_best) {
                    arg_best = d;
                    arg = &item;
                }
            }
            const double quad = tv_quadrature_1d(*arg, Mixture::single(truth), 1e-8);
            CHECK(quad == doctest::Approx(arg_best).epsilon(1e-6));
        }
    }
    INFO("worst min-TV ", worst);
    CHECK(hits >= 90);
}

TEST_CASE("clean decoding at d=2 via the MC upper estimate") {
    Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
    const Gaussian truth(mu, Eigen::MatrixXd::Identity(2, 2));
    const Mixture truth_mix = Mixture::single(truth);

    DecodeParams p;
    p.m = 20;
    p.L_budget = 400000;
    p.alpha = 0.15;
    p.grid_bits = 0;

    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        RngStream data_rng(derive_seed(300, static_cast<uint64_t>(trial)));
        const Dataset data = sample(truth, 500, data_rng);
        RngStream rng(derive_seed(400, static_cast<uint64_t>(trial)));
        const HypothesisList list = gaussian_list_decode(data, p, rng);
        // Cheap bound first, then the MC oracle on the best candidate.
        double best_upper = 1e9;
        const Mixture* arg = nullptr;
        for (const auto& item : list.items) {
            const double u = tv_bounds_gaussian(truth, item.component(0)).upper;
            if (u < best_upper) {
                best_upper = u;
                arg = &item;
            }
        }
        RngStream mc_rng(derive_seed(500, static_cast<uint64_t>(trial)));
        const TvEstimate est = tv_mc_estimate(truth_mix, *arg, 40000, 0.95, mc_rng);
        hits += est.value + est.half_width <= 0.15;
    }
    CHECK(hits >= 90);
}

TEST_CASE("grid refinement never hurts on fixed data") {
    const Gaussian truth = g1d(0.0, 1.0);
    RngStream data_rng(55);
    DecodeParams p;
    p.m = 12;
    p.L_budget = 2000000;
    p.alpha = 0.1;
    const Dataset data = sample(truth, 12, data_rng);  // subsample == data, no rng use
    for (int b : {0, 1, 2}) {
        DecodeParams coarse = p;
        coarse.grid_bits = b;
        DecodeParams fine = p;
        fine.grid_bits = std::max(2 * b, b + 1);  // dyadic levels nest
        RngStream r1(1), r2(1);
        const double tv_coarse = min_tv_to(gaussian_list_decode(data, coarse, r1), truth);
        const double tv_fine = min_tv_to(gaussian_list_decode(data, fine, r2), truth);
        CHECK(tv_fine <= tv_coarse + 1e-12);
    }
}

TEST_CASE("lift at gamma 0 equals the base decoder on the prefix") {
    const Gaussian truth = g1d(1.0, 1.0);
    RngStream data_rng(13);
    const Dataset data = sample(truth, 80, data_rng);

    DecodeParams p;
    p.m = 3;
    p.beta = 0.2;
    p.gamma = 0.0;
    p.L_budget = 100000;
    const long n = contamination_sample_count(p);
    REQUIRE(n == static_cast<long>(std::ceil(6.0 + 8.0 * std::log(5.0))));

    RngStream r1(3);
    const HypothesisList lifted = lift_contamination(data, p, r1);

    Dataset prefix;
    prefix.points.assign(data.points.begin(), data.points.begin() + n);
    DecodeParams q = p;
    q.m = n;
    RngStream r2(3);
    const HypothesisList base = gaussian_list_decode(prefix, q, r2);
    REQUIRE(lifted.items.size() == base.items.size());
    for (size_t i = 0; i < lifted.items.size(); ++i) {
        CHECK(canonical_key(lifted.items[i]) == canonical_key(base.items[i]));
    }
}

TEST_CASE("lift survives 40 percent contamination") {
    const Gaussian truth = g1d(0.0, 1.0);
    const Mixture corrupted = mix1d({0.6, 0.4}, {{0.0, 1.0}, {50.0, 1.0}});

    DecodeParams p;
    p.m = 5;
    p.beta = 0.05;
    p.gamma = 0.4;
    p.alpha = 0.15;
    p.L_budget = 300000;
    p.grid_bits = 1;
    const long n = contamination_sample_count(p);

    int hits = 0;
    std::string mode;
    for (int trial = 0; trial < 100; ++trial) {
        RngStream data_rng(derive_seed(600, static_cast<uint64_t>(trial)));
        const Dataset data = sample(corrupted, static_cast<size_t>(n), data_rng);
        RngStream rng(derive_seed(700, static_cast<uint64_t>(trial)));
        const HypothesisList list = lift_contamination(data, p, rng);
        mode = list.manifest["mode"];
        hits += min_tv_to(list, truth) <= p.alpha;
    }
    CHECK(mode == "random");
    CHECK(hits >= 90);
}

TEST_CASE("dense decoding: k=1 reduces to the lifted component decoder") {
    const Gaussian truth = g1d(0.0, 1.0);
    RngStream data_rng(17);
    const Dataset data = sample(truth, 500, data_rng);

    DecodeParams p;
    p.m = 6;
    p.beta = 0.2;
    p.gamma = 0.0;
    p.alpha = 0.3;
    p.L_budget = 500;
    RngStream r1(5);
    const HypothesisList dense = dense_mixture_list_decode(data, 1, p, r1);

    DecodeParams q = p;
    q.gamma = 1.0 - p.alpha;
    q.L_budget = DecodeOptions{}.component_budget;
    const double m1 = std::ceil((2.0 * p.m + 8.0 * std::log(1.0 / p.beta)) / p.alpha);
    const long m_needed = static_cast<long>(
        std::ceil(2.0 * m1 + 8.0 * std::log(1.0 / p.beta)));
    Dataset prefix;
    prefix.points.assign(data.points.begin(), data.points.begin() + m_needed);
    RngStream r2(5);
    RngStream comp_rng = r2.split(1);
    const HypothesisList lifted = lift_contamination(prefix, q, comp_rng);

    REQUIRE(dense.items.size() == lifted.items.size());
    for (size_t i = 0; i < dense.items.size(); ++i) {
        CHECK(dense.items[i].size() == 1);
        CHECK(dense.items[i].weights()(0) == 1.0);
        CHECK(canonical_key(dense.items[i]) == canonical_key(lifted.items[i]));
    }
}

TEST_CASE("dense decoding: raw emission count matches the cross formula") {
    const Mixture truth = mix1d({0.5, 0.5}, {{-10.0, 1.0}, {10.0, 1.0}});
    RngStream data_rng(19);
    const Dataset data = sample(truth, 400, data_rng);

    DecodeParams p;
    p.m = 3;
    p.beta = 0.45;
    p.gamma = 0.0;
    p.alpha = 0.2;
    p.grid_bits = 0;
    p.L_budget = 100000;
    RngStream rng(21);
    const HypothesisList list = dense_mixture_list_decode(data, 2, p, rng);
    const long n_comp = list.manifest["component_items"];
    const long w1 = static_cast<long>(simplex_cover(1, 0.2).elements.size());
    const long w2 = static_cast<long>(simplex_cover(2, 0.1).elements.size());
    CHECK(list.manifest["emitted_raw"] == n_comp * w1 + n_comp * n_comp * w2);
    CHECK(static_cast<long>(list.items.size()) <= p.L_budget);
}

TEST_CASE("dense decoding recovers a two-component mixture") {
    const Mixture truth = mix1d({0.5, 0.5}, {{-10.0, 1.0}, {10.0, 1.0}});

    DecodeParams p;
    p.m = 3;
    p.beta = 0.45;
    p.gamma = 0.0;
    p.alpha = 0.2;
    p.L_budget = 6000;
    p.grid_bits = 0;
    DecodeOptions opts;
    opts.component_budget = 96;

    int hits = 0;
    for (int trial = 0; trial < 100; ++trial) {
        RngStream data_rng(derive_seed(800, static_cast<uint64_t>(trial)));
        const Dataset data = sample(truth, 400, data_rng);
        RngStream rng(derive_seed(900, static_cast<uint64_t>(trial)));
        const HypothesisList list = dense_mixture_list_decode(data, 2, p, rng, opts);
        hits += min_kappa_to(list, truth) <= p.alpha;
    }
    CHECK(hits >= 85);
}

TEST_CASE("dense decoding rejects undersized samples") {
    const Mixture truth = mix1d({0.5, 0.5}, {{-10.0, 1.0}, {10.0, 1.0}});
    RngStream data_rng(23);
    const Dataset data = sample(truth, 50, data_rng);
    DecodeParams p;
    p.m = 3;
    p.beta = 0.3;
    p.alpha = 0.2;
    RngStream rng(25);
    CHECK_THROWS_AS(dense_mixture_list_decode(data, 2, p, rng), InsufficientData);
}

TEST_CASE("hypothesis lists serialize with their manifest") {
    const Gaussian truth = g1d(0.0, 1.0);
    RngStream data_rng(27);
    const Dataset data = sample(truth, 30, data_rng);
    DecodeParams p;
    p.m = 10;
    p.L_budget = 50;
    RngStream rng(29);
    HypothesisList list = gaussian_list_decode(data, p, rng);
    list.source_chunk = 4;
    const json j = hypothesis_list_to_json(list);
    REQUIRE(j.contains("manifest"));
    CHECK(j["manifest"]["m"] == 10);
    const HypothesisList back = hypothesis_list_from_json(j);
    REQUIRE(back.items.size() == list.items.size());
    CHECK(back.source_chunk == 4);
    for (size_t i = 0; i < list.items.size(); ++i) {
        CHECK(canonical_key(back.items[i]) == canonical_key(list.items[i]));
    }
}
