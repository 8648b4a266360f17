#include "dpmix/model.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace dpmix {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kSymmetryTol = 1e-10;
constexpr double kPivotRelTol = 1e-12;
constexpr double kWeightSumTol = 1e-12;

// Cholesky with an explicit pivot gate so rejection behavior is reproducible:
// a pivot <= kPivotRelTol * trace counts as not positive definite.
Eigen::MatrixXd cholesky_or_throw(const Eigen::MatrixXd& cov) {
    const int d = static_cast<int>(cov.rows());
    const double pivot_floor = kPivotRelTol * std::max(cov.trace(), 0.0);
    Eigen::MatrixXd l = Eigen::MatrixXd::Zero(d, d);
    for (int j = 0; j < d; ++j) {
        double diag = cov(j, j);
        for (int k = 0; k < j; ++k) diag -= l(j, k) * l(j, k);
        if (!(diag > pivot_floor)) {
            throw NotPositiveDefinite("covariance pivot " + std::to_string(diag) +
                                      " at index " + std::to_string(j));
        }
        l(j, j) = std::sqrt(diag);
        for (int i = j + 1; i < d; ++i) {
            double v = cov(i, j);
            for (int k = 0; k < j; ++k) v -= l(i, k) * l(j, k);
            l(i, j) = v / l(j, j);
        }
    }
    return l;
}

void format_double(std::string& out, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    out += buf;
}

}  // namespace

uint64_t provenance_tick() {
    static std::atomic<uint64_t> tick{1};
    return tick.fetch_add(1);
}

Gaussian::Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov)
    : mean_(std::move(mean)), cov_(std::move(cov)) {
    const int d = static_cast<int>(mean_.size());
    if (d < 1 || cov_.rows() != d || cov_.cols() != d) {
        throw DimensionMismatch("mean length " + std::to_string(d) + " vs cov " +
                                std::to_string(cov_.rows()) + "x" + std::to_string(cov_.cols()));
    }
    for (int i = 0; i < d; ++i) {
        for (int j = i + 1; j < d; ++j) {
            if (std::abs(cov_(i, j) - cov_(j, i)) > kSymmetryTol) {
                throw AsymmetricCovariance("cov(" + std::to_string(i) + "," + std::to_string(j) +
                                           ") differs from its transpose");
            }
        }
    }
    chol_ = cholesky_or_throw(cov_);
    double log_det_half = 0.0;
    for (int i = 0; i < d; ++i) log_det_half += std::log(chol_(i, i));
    log_norm_ = -0.5 * d * kLog2Pi - log_det_half;
}

Eigen::VectorXd Gaussian::whiten(const Eigen::VectorXd& v) const {
    return chol_.triangularView<Eigen::Lower>().solve(v);
}

double Gaussian::log_density(const Eigen::VectorXd& x) const {
    if (x.size() != mean_.size()) throw DimensionMismatch("point dim vs gaussian dim");
    const Eigen::VectorXd z = whiten(x - mean_);
    return log_norm_ - 0.5 * z.squaredNorm();
}

Eigen::VectorXd Gaussian::sample(RngStream& rng) const {
    Eigen::VectorXd z(mean_.size());
    for (int i = 0; i < z.size(); ++i) z(i) = rng.normal();
    return mean_ + chol_ * z;
}

Mixture::Mixture(Eigen::VectorXd weights, std::vector<Gaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
    const int s = static_cast<int>(components_.size());
    if (s < 1 || weights_.size() != s) {
        throw DimensionMismatch("weights length vs component count");
    }
    double sum = 0.0;
    for (int i = 0; i < s; ++i) {
        if (weights_(i) < 0.0) throw InvalidConfig("negative mixture weight");
        sum += weights_(i);
    }
    if (std::abs(sum - 1.0) > kWeightSumTol) {
        throw InvalidConfig("mixture weights sum to " + std::to_string(sum));
    }
    const int d = components_.front().dim();
    for (const auto& c : components_) {
        if (c.dim() != d) throw DimensionMismatch("mixture components of unequal dimension");
    }
}

Mixture Mixture::single(Gaussian g) {
    Eigen::VectorXd w(1);
    w << 1.0;
    std::vector<Gaussian> comps;
    comps.push_back(std::move(g));
    return Mixture(std::move(w), std::move(comps));
}

double Mixture::log_density(const Eigen::VectorXd& x) const {
    // Max-shifted log-sum so points far in the tails of every component
    // still produce a finite value.
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(components_.size(), -std::numeric_limits<double>::infinity());
    for (size_t i = 0; i < components_.size(); ++i) {
        if (weights_(static_cast<int>(i)) == 0.0) continue;
        terms[i] = std::log(weights_(static_cast<int>(i))) + components_[i].log_density(x);
        best = std::max(best, terms[i]);
    }
    if (!std::isfinite(best)) return best;
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
}

Eigen::VectorXd Mixture::sample(RngStream& rng) const {
    const double u = rng.uniform();
    double acc = 0.0;
    int idx = size() - 1;
    for (int i = 0; i < size(); ++i) {
        acc += weights_(i);
        if (u < acc) {
            idx = i;
            break;
        }
    }
    return components_[static_cast<size_t>(idx)].sample(rng);
}

Gaussian gaussian_create(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov) {
    return Gaussian(mean, cov);
}

Dataset sample(const Gaussian& g, size_t n, RngStream& rng) {
    Dataset out;
    out.seed = rng.seed();
    out.points.reserve(n);
    for (size_t i = 0; i < n; ++i) out.points.push_back(g.sample(rng));
    out.created_tick = provenance_tick();
    return out;
}

Dataset sample(const Mixture& m, size_t n, RngStream& rng) {
    Dataset out;
    out.seed = rng.seed();
    out.points.reserve(n);
    for (size_t i = 0; i < n; ++i) out.points.push_back(m.sample(rng));
    out.created_tick = provenance_tick();
    return out;
}

Gaussian affine_transform(const Gaussian& g, const Eigen::MatrixXd& a,
                          const Eigen::VectorXd& b) {
    const int d = g.dim();
    if (a.rows() != d || a.cols() != d || b.size() != d) {
        throw DimensionMismatch("transform shape vs gaussian dimension");
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw SingularTransform("transform matrix is singular");
    Eigen::MatrixXd cov = a * g.cov() * a.transpose();
    cov = 0.5 * (cov + cov.transpose().eval());
    return Gaussian(a * g.mean() + b, cov);
}

DenseDecomposition dense_decompose(const Mixture& m, int k, double alpha) {
    if (alpha < 0.0 || alpha >= 1.0) throw InvalidConfig("alpha outside [0,1)");
    if (m.size() > k) throw InvalidConfig("mixture has more than k components");
    const double threshold = alpha / static_cast<double>(k);
    std::vector<int> keep, drop;
    double gamma = 0.0;
    for (int i = 0; i < m.size(); ++i) {
        if (m.weights()(i) < threshold) {
            drop.push_back(i);
            gamma += m.weights()(i);
        } else {
            keep.push_back(i);
        }
    }
    if (drop.empty() || keep.empty()) {
        // All-dense (or nothing above threshold, which only happens when the
        // whole weight vector sits below alpha/k and alpha < 1 forbids it).
        return DenseDecomposition{0.0, m, std::nullopt};
    }
    auto build = [&](const std::vector<int>& idx, double total) {
        Eigen::VectorXd w(static_cast<int>(idx.size()));
        std::vector<Gaussian> comps;
        comps.reserve(idx.size());
        for (size_t i = 0; i < idx.size(); ++i) {
            w(static_cast<int>(i)) = m.weights()(idx[i]) / total;
            comps.push_back(m.component(idx[i]));
        }
        // Exact renormalization so downstream weight-sum checks hold.
        w /= w.sum();
        return Mixture(w, std::move(comps));
    };
    DenseDecomposition out{gamma, build(keep, 1.0 - gamma), build(drop, gamma)};
    return out;
}

double gaussian_delta(const Gaussian& g1, const Gaussian& g2) {
    if (g1.dim() != g2.dim()) throw DimensionMismatch("delta of unequal dimensions");
    const auto& l = g1.chol();
    // L^{-1} S2 L^{-T} is orthogonally similar to S1^{-1/2} S2 S1^{-1/2},
    // so Frobenius norms of (M - I) agree; same for the whitened mean gap.
    Eigen::MatrixXd m = l.triangularView<Eigen::Lower>().solve(g2.cov());
    m = l.triangularView<Eigen::Lower>().solve(m.transpose().eval());
    m.diagonal().array() -= 1.0;
    const double cov_term = m.norm();
    const double mean_term = g1.whiten(g1.mean() - g2.mean()).norm();
    return std::max(cov_term, mean_term);
}

json to_json(const Gaussian& g) {
    return to_json(Mixture::single(g));
}

json to_json(const Mixture& m) {
    json comps = json::array();
    for (const auto& c : m.components()) {
        json mean = json::array();
        for (int i = 0; i < c.dim(); ++i) mean.push_back(c.mean()(i));
        json cov = json::array();
        for (int i = 0; i < c.dim(); ++i) {
            json row = json::array();
            for (int j = 0; j < c.dim(); ++j) row.push_back(c.cov()(i, j));
            cov.push_back(row);
        }
        comps.push_back(json{{"mean", mean}, {"cov", cov}});
    }
    json weights = json::array();
    for (int i = 0; i < m.size(); ++i) weights.push_back(m.weights()(i));
    return json{{"weights", weights}, {"components", comps}};
}

Mixture mixture_from_json(const json& j) {
    if (!j.contains("weights") || !j.contains("components")) {
        throw InvalidConfig("model json missing weights/components");
    }
    const auto& jw = j.at("weights");
    const auto& jc = j.at("components");
    if (!jw.is_array() || !jc.is_array() || jw.size() != jc.size() || jw.empty()) {
        throw InvalidConfig("model json weights/components malformed");
    }
    Eigen::VectorXd w(static_cast<int>(jw.size()));
    for (size_t i = 0; i < jw.size(); ++i) w(static_cast<int>(i)) = jw[i].get<double>();
    std::vector<Gaussian> comps;
    comps.reserve(jc.size());
    for (const auto& c : jc) {
        const auto& jm = c.at("mean");
        const auto& jcov = c.at("cov");
        Eigen::VectorXd mean(static_cast<int>(jm.size()));
        for (size_t i = 0; i < jm.size(); ++i) mean(static_cast<int>(i)) = jm[i].get<double>();
        Eigen::MatrixXd cov(static_cast<int>(jcov.size()), static_cast<int>(jcov.size()));
        for (size_t i = 0; i < jcov.size(); ++i) {
            const auto& row = jcov[i];
            if (row.size() != jcov.size()) throw InvalidConfig("cov is not square");
            for (size_t k = 0; k < row.size(); ++k) {
                cov(static_cast<int>(i), static_cast<int>(k)) = row[k].get<double>();
            }
        }
        comps.emplace_back(mean, cov);
    }
    return Mixture(w, std::move(comps));
}

std::string canonical_key(const Mixture& m) {
    std::vector<int> order(static_cast<size_t>(m.size()));
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
    auto comp_tuple = [&](int i) {
        std::string s;
        const auto& c = m.component(i);
        for (int a = 0; a < c.dim(); ++a) format_double(s, c.mean()(a));
        s += '|';
        for (int a = 0; a < c.dim(); ++a) {
            for (int b = 0; b < c.dim(); ++b) format_double(s, c.cov()(a, b));
        }
        s += '|';
        format_double(s, m.weights()(i));
        return s;
    };
    std::vector<std::string> parts;
    parts.reserve(order.size());
    for (int i : order) parts.push_back(comp_tuple(i));
    std::sort(parts.begin(), parts.end());
    std::string out = "s" + std::to_string(m.size()) + ";";
    for (auto& p : parts) {
        out += p;
        out += ';';
    }
    return out;
}

}  // namespace dpmix
