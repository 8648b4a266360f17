#include "dpmix/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace dpmix {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;

double abs_diff_density(const Mixture& p, const Mixture& q, double x) {
    Eigen::VectorXd v(1);
    v << x;
    return std::abs(p.density(v) - q.density(v));
}

struct SimpsonState {
    const Mixture* p;
    const Mixture* q;
    long evals = 0;
};

double simpson_rec(SimpsonState& st, double a, double b, double fa, double fm, double fb,
                   double whole, double eps, int depth) {
    const double m = 0.5 * (a + b);
    const double lm = 0.5 * (a + m);
    const double rm = 0.5 * (m + b);
    const double flm = abs_diff_density(*st.p, *st.q, lm);
    const double frm = abs_diff_density(*st.p, *st.q, rm);
    st.evals += 2;
    const double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    const double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if (depth <= 0 || std::abs(left + right - whole) <= 15.0 * eps) {
        return left + right + (left + right - whole) / 15.0;
    }
    return simpson_rec(st, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson_rec(st, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

}  // namespace

double normal_cdf(double x) { return 0.5 * std::erfc(-x / kSqrt2); }

double tv_quadrature_1d(const Mixture& p, const Mixture& q, double tol) {
    if (p.dim() != 1 || q.dim() != 1) throw DimensionMismatch("quadrature oracle is 1-D only");
    if (!(tol > 0.0)) throw InvalidConfig("quadrature tolerance must be positive");

    std::vector<double> cuts;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -lo;
    auto add = [&](const Mixture& m) {
        for (int i = 0; i < m.size(); ++i) {
            const double mu = m.component(i).mean()(0);
            const double sd = std::sqrt(m.component(i).cov()(0, 0));
            lo = std::min(lo, mu - 12.0 * sd);
            hi = std::max(hi, mu + 12.0 * sd);
            cuts.push_back(mu);
        }
    };
    add(p);
    add(q);
    cuts.push_back(lo);
    cuts.push_back(hi);
    std::sort(cuts.begin(), cuts.end());
    cuts.erase(std::unique(cuts.begin(), cuts.end()), cuts.end());

    SimpsonState st{&p, &q, 0};
    double total = 0.0;
    const double span = hi - lo;
    for (size_t i = 0; i + 1 < cuts.size(); ++i) {
        const double a = cuts[i];
        const double b = cuts[i + 1];
        if (!(b > a)) continue;
        const double fa = abs_diff_density(p, q, a);
        const double fb = abs_diff_density(p, q, b);
        const double fm = abs_diff_density(p, q, 0.5 * (a + b));
        const double whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
        // Tolerance budget proportional to segment length; the 2x covers the
        // final 1/2 factor.
        const double eps = 2.0 * tol * (b - a) / span;
        total += simpson_rec(st, a, b, fa, fm, fb, whole, eps, 48);
    }
    return 0.5 * total;
}

double tv_gaussian_1d_exact(const Gaussian& g1, const Gaussian& g2) {
    if (g1.dim() != 1 || g2.dim() != 1) throw DimensionMismatch("exact TV is 1-D only");
    const double m1 = g1.mean()(0), v1 = g1.cov()(0, 0);
    const double m2 = g2.mean()(0), v2 = g2.cov()(0, 0);
    const double s1 = std::sqrt(v1), s2 = std::sqrt(v2);
    if (std::abs(v1 - v2) <= 1e-14 * std::max(v1, v2)) {
        return 2.0 * normal_cdf(std::abs(m1 - m2) / (2.0 * s1)) - 1.0;
    }
    // Crossings of the two log densities: A x^2 + B x + C = 0.
    const double a = 0.5 / v2 - 0.5 / v1;
    const double b = m1 / v1 - m2 / v2;
    const double c = m2 * m2 / (2.0 * v2) - m1 * m1 / (2.0 * v1) + 0.5 * std::log(v2 / v1);
    const double disc = std::max(b * b - 4.0 * a * c, 0.0);
    const double sq = std::sqrt(disc);
    double r1 = (-b - sq) / (2.0 * a);
    double r2 = (-b + sq) / (2.0 * a);
    if (r1 > r2) std::swap(r1, r2);
    const double in1 = normal_cdf((r2 - m1) / s1) - normal_cdf((r1 - m1) / s1);
    const double in2 = normal_cdf((r2 - m2) / s2) - normal_cdf((r1 - m2) / s2);
    return std::abs(in1 - in2);
}

TvEstimate tv_mc_estimate(const Mixture& p, const Mixture& q, long n, double conf,
                          RngStream& rng) {
    if (n < 1) throw InvalidConfig("tv_mc_estimate needs n >= 1");
    double acc = 0.0;
    for (long i = 0; i < n; ++i) {
        const Eigen::VectorXd x = rng.bernoulli(0.5) ? p.sample(rng) : q.sample(rng);
        const double dp = p.density(x);
        const double dq = q.density(x);
        const double denom = dp + dq;
        if (denom > 0.0) acc += std::abs(dp - dq) / denom;
    }
    TvEstimate est;
    est.value = acc / static_cast<double>(n);
    est.conf = conf;
    est.n_samples = n;
    est.half_width = std::sqrt(std::log(2.0 / (1.0 - conf)) / (2.0 * static_cast<double>(n)));
    return est;
}

TvBounds tv_bounds_gaussian(const Gaussian& g1, const Gaussian& g2) {
    const double delta = gaussian_delta(g1, g2);
    TvBounds out;
    out.upper = std::min(1.0, delta / kSqrt2);
    out.lower = delta / 200.0;
    out.lower_valid = out.upper <= 1.0 / 600.0;
    return out;
}

namespace {

// Perfect matching on the subgraph {cost <= threshold} via augmenting paths.
bool feasible(const std::vector<std::vector<double>>& cost, double threshold,
              std::vector<int>& match_of_right) {
    const int s = static_cast<int>(cost.size());
    match_of_right.assign(static_cast<size_t>(s), -1);
    std::vector<char> seen;
    std::function<bool(int)> try_match = [&](int i) {
        for (int j = 0; j < s; ++j) {
            if (cost[static_cast<size_t>(i)][static_cast<size_t>(j)] <= threshold &&
                !seen[static_cast<size_t>(j)]) {
                seen[static_cast<size_t>(j)] = 1;
                if (match_of_right[static_cast<size_t>(j)] < 0 ||
                    try_match(match_of_right[static_cast<size_t>(j)])) {
                    match_of_right[static_cast<size_t>(j)] = i;
                    return true;
                }
            }
        }
        return false;
    };
    for (int i = 0; i < s; ++i) {
        seen.assign(static_cast<size_t>(s), 0);
        if (!try_match(i)) return false;
    }
    return true;
}

}  // namespace

KappaMixResult kappa_mix(const Mixture& m1, const Mixture& m2, const GaussianMetric& tv_oracle) {
    KappaMixResult out;
    if (m1.size() != m2.size()) {
        out.value = std::numeric_limits<double>::infinity();
        return out;
    }
    const int s = m1.size();
    std::vector<std::vector<double>> cost(static_cast<size_t>(s),
                                          std::vector<double>(static_cast<size_t>(s), 0.0));
    std::vector<double> values;
    values.reserve(static_cast<size_t>(s * s));
    for (int i = 0; i < s; ++i) {
        for (int j = 0; j < s; ++j) {
            const double wterm = s * std::abs(m1.weights()(i) - m2.weights()(j));
            const double tvterm = tv_oracle(m1.component(i), m2.component(j));
            cost[static_cast<size_t>(i)][static_cast<size_t>(j)] = std::max(wterm, tvterm);
            values.push_back(cost[static_cast<size_t>(i)][static_cast<size_t>(j)]);
        }
    }
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());

    std::vector<int> match_of_right;
    size_t lo = 0, hi = values.size() - 1;
    // The max cost is always feasible, so hi works.
    while (lo < hi) {
        const size_t mid = lo + (hi - lo) / 2;
        if (feasible(cost, values[mid], match_of_right)) {
            hi = mid;
        } else {
            lo = mid + 1;
        }
    }
    feasible(cost, values[lo], match_of_right);
    std::vector<int> perm(static_cast<size_t>(s), -1);
    for (int j = 0; j < s; ++j) perm[static_cast<size_t>(match_of_right[static_cast<size_t>(j)])] = j;
    double value = 0.0;
    for (int i = 0; i < s; ++i) {
        value = std::max(value, cost[static_cast<size_t>(i)][static_cast<size_t>(perm[static_cast<size_t>(i)])]);
    }
    out.value = value;
    out.matching = std::move(perm);
    return out;
}

KappaMixResult kappa_mix_1d(const Mixture& m1, const Mixture& m2) {
    return kappa_mix(m1, m2, [](const Gaussian& a, const Gaussian& b) {
        return tv_gaussian_1d_exact(a, b);
    });
}

}  // namespace dpmix
