#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "dpmix/model.hpp"

namespace dpmix {

struct TvEstimate {
    double value = 0.0;
    double half_width = 0.0;
    double conf = 0.99;
    long n_samples = 0;
};

struct TvBounds {
    double lower = 0.0;
    double upper = 0.0;
    bool lower_valid = false;
};

struct KappaMixResult {
    double value = 0.0;  // +inf when component counts differ
    std::optional<std::vector<int>> matching;

    bool finite() const { return matching.has_value(); }
};

using GaussianMetric = std::function<double(const Gaussian&, const Gaussian&)>;
using MixtureMetric = std::function<double(const Mixture&, const Mixture&)>;

double normal_cdf(double x);

/// Adaptive quadrature of (1/2) integral |p - q| over the union of the
/// +-12 sigma ranges of all components. The 1-D test oracle.
double tv_quadrature_1d(const Mixture& p, const Mixture& q, double tol);

/// Closed-form TV between two 1-D Gaussians via the density crossing
/// points. Fast path for cover construction and candidate scans; agrees
/// with tv_quadrature_1d (checked in tests).
double tv_gaussian_1d_exact(const Gaussian& g1, const Gaussian& g2);

/// Unbiased estimator: x ~ (p+q)/2, integrand |p-q|/(p+q), Hoeffding CI.
TvEstimate tv_mc_estimate(const Mixture& p, const Mixture& q, long n, double conf,
                          RngStream& rng);

/// upper = min(1, Delta/sqrt(2)); lower = Delta/200, flagged valid only in
/// the small-distance regime (upper <= 1/600 is a checkable sufficient
/// condition for it).
TvBounds tv_bounds_gaussian(const Gaussian& g1, const Gaussian& g2);

/// Component-wise mixture distance: min over component matchings of the max
/// of s*|w_i - w'_j| and tv(f_i, f'_j); infinite across unequal component
/// counts. Solved exactly by bottleneck assignment (binary search over the
/// distinct pair costs with augmenting-path feasibility checks).
KappaMixResult kappa_mix(const Mixture& m1, const Mixture& m2, const GaussianMetric& tv_oracle);

/// kappa_mix with the exact 1-D TV component metric (d == 1 only).
KappaMixResult kappa_mix_1d(const Mixture& m1, const Mixture& m2);

/// Indices of candidates within `radius` of `center` under `metric`.
template <class H, class M>
std::vector<int> ball_members(const H& center, const std::vector<H>& candidates, double radius,
                              M&& metric) {
    std::vector<int> out;
    for (size_t i = 0; i < candidates.size(); ++i) {
        if (metric(center, candidates[i]) <= radius) out.push_back(static_cast<int>(i));
    }
    return out;
}

}  // namespace dpmix
