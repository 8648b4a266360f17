#include "dpmix/covers.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <unordered_map>
#include <unordered_set>

namespace dpmix {

namespace {

constexpr double kSqrt2 = 1.4142135623730950488;
constexpr double kBallGammaMax = 1.0 / 600.0;

std::string g17(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string vector_key(const Eigen::VectorXd& v) {
    std::string s;
    for (int i = 0; i < v.size(); ++i) {
        s += g17(v(i));
        s += ',';
    }
    return s;
}

std::string gaussian_key(const Gaussian& g) {
    std::string s = vector_key(g.mean());
    s += '|';
    for (int i = 0; i < g.dim(); ++i) {
        for (int j = 0; j < g.dim(); ++j) {
            s += g17(g.cov()(i, j));
            s += ',';
        }
    }
    return s;
}

Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& m) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
    return es.operatorSqrt();
}

json box_to_json(const GaussianBox& box) {
    return json{{"dim", box.dim},
                {"mean_bound", box.mean_bound},
                {"eig_min", box.eig_min},
                {"eig_max", box.eig_max}};
}

GaussianBox box_from_json(const json& j) {
    GaussianBox box;
    box.dim = j.at("dim").get<int>();
    box.mean_bound = j.at("mean_bound").get<double>();
    box.eig_min = j.at("eig_min").get<double>();
    box.eig_max = j.at("eig_max").get<double>();
    if (box.dim < 1 || box.eig_min <= 0.0 || box.eig_max < box.eig_min || box.mean_bound < 0.0) {
        throw InvalidConfig("malformed gaussian box");
    }
    return box;
}

}  // namespace

std::string metric_tag_name(MetricTag tag) {
    switch (tag) {
        case MetricTag::tv: return "tv";
        case MetricTag::kappa_mix: return "kappa_mix";
        case MetricTag::linf: return "linf";
    }
    return "tv";
}

MetricTag metric_tag_from_name(const std::string& name) {
    if (name == "tv") return MetricTag::tv;
    if (name == "kappa_mix") return MetricTag::kappa_mix;
    if (name == "linf") return MetricTag::linf;
    throw InvalidConfig("unknown metric tag: " + name);
}

// ---------------------------------------------------------------------------
// Simplex cover
// ---------------------------------------------------------------------------

SimplexGrid simplex_grid(int k, double alpha) {
    if (k < 1) throw InvalidConfig("simplex grid needs k >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw InvalidConfig("simplex alpha outside (0,1]");
    SimplexGrid g;
    g.k = k;
    g.alpha = alpha;
    g.per_axis = static_cast<long>(std::ceil(1.0 / alpha - 1e-12));
    return g;
}

namespace {

// Permutation-invariant sum: equal multisets give bit-identical totals.
double sorted_sum(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    double acc = 0.0;
    for (double x : v) acc += x;
    return acc;
}

constexpr double kWeightQuantum = 17592186044416.0;  // 2^44

}  // namespace

std::optional<Eigen::VectorXd> SimplexGrid::representative(const std::vector<long>& idx) const {
    // The representative is the projection of the cube center onto the
    // simplex slice of the cube. The rule is permutation-equivariant (all
    // reductions run over sorted values), so the representative set is
    // closed under coordinate permutations; canonical dedup of mixtures
    // depends on that.
    std::vector<double> lo(static_cast<size_t>(k)), hi(static_cast<size_t>(k)),
        center(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        lo[static_cast<size_t>(i)] = static_cast<double>(idx[static_cast<size_t>(i)]) * alpha;
        if (lo[static_cast<size_t>(i)] > 1.0) return std::nullopt;
        hi[static_cast<size_t>(i)] = std::min(lo[static_cast<size_t>(i)] + alpha, 1.0);
        center[static_cast<size_t>(i)] = lo[static_cast<size_t>(i)] + 0.5 * alpha;
    }
    if (sorted_sum(lo) > 1.0 || sorted_sum(hi) < 1.0) return std::nullopt;

    auto g_of = [&](double lambda) {
        std::vector<double> terms(static_cast<size_t>(k));
        for (int i = 0; i < k; ++i) {
            terms[static_cast<size_t>(i)] = std::clamp(center[static_cast<size_t>(i)] - lambda,
                                                       lo[static_cast<size_t>(i)],
                                                       hi[static_cast<size_t>(i)]);
        }
        return sorted_sum(terms);
    };
    std::vector<double> knots;
    knots.reserve(static_cast<size_t>(2 * k));
    for (int i = 0; i < k; ++i) {
        knots.push_back(center[static_cast<size_t>(i)] - hi[static_cast<size_t>(i)]);
        knots.push_back(center[static_cast<size_t>(i)] - lo[static_cast<size_t>(i)]);
    }
    std::sort(knots.begin(), knots.end());

    double lambda = knots.back();
    if (g_of(knots.front()) <= 1.0) {
        lambda = knots.front();
    } else {
        for (size_t j = 0; j + 1 < knots.size(); ++j) {
            const double ga = g_of(knots[j]);
            const double gb = g_of(knots[j + 1]);
            if (ga >= 1.0 && gb <= 1.0) {
                lambda = ga > gb ? knots[j] + (ga - 1.0) * (knots[j + 1] - knots[j]) / (ga - gb)
                                 : knots[j];
                break;
            }
        }
    }
    Eigen::VectorXd w(k);
    for (int i = 0; i < k; ++i) {
        const double v = std::clamp(center[static_cast<size_t>(i)] - lambda,
                                    lo[static_cast<size_t>(i)], hi[static_cast<size_t>(i)]);
        w(i) = std::nearbyint(v * kWeightQuantum) / kWeightQuantum;
    }
    return w;
}

void SimplexGrid::for_each(const std::function<void(const Eigen::VectorXd&)>& fn) const {
    std::vector<long> idx(static_cast<size_t>(k), 0);
    std::function<void(int, double)> rec = [&](int depth, double sum_lo) {
        if (sum_lo > 1.0 + 1e-12) return;
        if (depth == k) {
            if (auto rep = representative(idx)) fn(*rep);
            return;
        }
        for (long i = 0; i < per_axis; ++i) {
            idx[static_cast<size_t>(depth)] = i;
            rec(depth + 1, sum_lo + static_cast<double>(i) * alpha);
        }
    };
    rec(0, 0.0);
}

std::vector<Eigen::VectorXd> SimplexGrid::near(const Eigen::VectorXd& w, double radius) const {
    if (w.size() != k) throw DimensionMismatch("weight vector size vs grid k");
    std::vector<long> lo(static_cast<size_t>(k)), hi(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) {
        lo[static_cast<size_t>(i)] =
            std::max<long>(0, static_cast<long>(std::floor((w(i) - radius) / alpha)));
        hi[static_cast<size_t>(i)] =
            std::min<long>(per_axis - 1, static_cast<long>(std::floor((w(i) + radius) / alpha)));
    }
    std::vector<Eigen::VectorXd> out;
    std::unordered_set<std::string> seen;
    std::vector<long> idx(static_cast<size_t>(k));
    std::function<void(int)> rec = [&](int depth) {
        if (depth == k) {
            if (auto rep = representative(idx)) {
                bool inside = true;
                for (int i = 0; i < k && inside; ++i) {
                    inside = std::abs((*rep)(i) - w(i)) <= radius + 1e-12;
                }
                if (inside && seen.insert(vector_key(*rep)).second) out.push_back(*rep);
            }
            return;
        }
        for (long i = lo[static_cast<size_t>(depth)]; i <= hi[static_cast<size_t>(depth)]; ++i) {
            idx[static_cast<size_t>(depth)] = i;
            rec(depth + 1);
        }
    };
    rec(0);
    return out;
}

SimplexCover simplex_cover(int k, double alpha) {
    const SimplexGrid grid = simplex_grid(k, alpha);
    SimplexCover cover;
    cover.alpha = alpha;
    cover.metric = MetricTag::linf;
    cover.recipe = json{{"kind", "simplex"}, {"version", 1}, {"k", k}, {"alpha", alpha}};
    std::unordered_set<std::string> seen;
    grid.for_each([&](const Eigen::VectorXd& w) {
        if (seen.insert(vector_key(w)).second) cover.elements.push_back(w);
    });
    cover.built_tick = provenance_tick();
    return cover;
}

// ---------------------------------------------------------------------------
// Gaussian ball cover
// ---------------------------------------------------------------------------

namespace {

struct ScaleLatticePoint {
    Eigen::MatrixXd sigma;       // I + E
    Eigen::MatrixXd sigma_sqrt;  // symmetric square root
};

std::vector<Eigen::VectorXd> location_lattice(int d, double pitch, double radius) {
    const long jm = static_cast<long>(std::ceil(radius / pitch)) + 1;
    const double keep = radius + pitch * std::sqrt(static_cast<double>(d)) / 2.0;
    std::vector<Eigen::VectorXd> pts;
    Eigen::VectorXd v(d);
    std::function<void(int)> rec = [&](int depth) {
        if (depth == d) {
            if (v.norm() <= keep) pts.push_back(v);
            return;
        }
        for (long j = -jm; j <= jm; ++j) {
            v(depth) = static_cast<double>(j) * pitch;
            rec(depth + 1);
        }
    };
    rec(0);
    return pts;
}

std::vector<ScaleLatticePoint> scale_lattice(int d, double pitch, double radius) {
    const int entries = d * (d + 1) / 2;
    const long em = static_cast<long>(std::ceil(radius / pitch)) + 1;
    const double keep = radius + pitch * static_cast<double>(d) / 2.0;
    std::vector<ScaleLatticePoint> pts;
    std::vector<long> idx(static_cast<size_t>(entries), 0);
    std::function<void(int)> rec = [&](int depth) {
        if (depth == entries) {
            Eigen::MatrixXd e = Eigen::MatrixXd::Zero(d, d);
            int t = 0;
            for (int i = 0; i < d; ++i) {
                for (int j = i; j < d; ++j) {
                    const double val = static_cast<double>(idx[static_cast<size_t>(t++)]) * pitch;
                    e(i, j) = val;
                    e(j, i) = val;
                }
            }
            if (e.norm() > keep) return;
            Eigen::MatrixXd sigma = Eigen::MatrixXd::Identity(d, d) + e;
            try {
                Gaussian probe(Eigen::VectorXd::Zero(d), sigma);
                pts.push_back(ScaleLatticePoint{sigma, symmetric_sqrt(sigma)});
            } catch (const NotPositiveDefinite&) {
            }
            return;
        }
        for (long j = -em; j <= em; ++j) {
            idx[static_cast<size_t>(depth)] = j;
            rec(depth + 1);
        }
    };
    rec(0);
    return pts;
}

}  // namespace

GaussianCover gaussian_ball_cover(const Gaussian& center, double alpha, double gamma,
                                  const BallCoverOptions& opts) {
    if (!(alpha > 0.0 && alpha < gamma && gamma <= kBallGammaMax + 1e-15)) {
        throw InvalidRadii("need 0 < alpha < gamma <= 1/600");
    }
    const int d = center.dim();
    const double alpha_t = alpha * opts.sub_pitch_factor;
    const double loc_pitch = kSqrt2 * alpha_t / std::sqrt(static_cast<double>(d));
    const double loc_radius = 200.0 * gamma * kSqrt2;
    const double scale_pitch =
        0.5 * kSqrt2 * alpha_t / std::sqrt(static_cast<double>(d * (d + 1)) / 2.0);
    const double scale_radius = 200.0 * gamma;

    const double projected = std::pow(2.0 * loc_radius / loc_pitch + 3.0, d) *
                             std::pow(2.0 * scale_radius / scale_pitch + 3.0,
                                      static_cast<double>(d * (d + 1)) / 2.0);
    if (projected > static_cast<double>(opts.element_cap)) {
        throw InfeasibleBudget("ball cover projects to " + std::to_string(projected) +
                               " elements");
    }

    const auto locations = location_lattice(d, loc_pitch, loc_radius);
    const auto scales = scale_lattice(d, scale_pitch, scale_radius);
    if (locations.size() * scales.size() > opts.element_cap) {
        throw InfeasibleBudget("ball cover lattice exceeds the element cap");
    }

    const Eigen::MatrixXd a = symmetric_sqrt(center.cov());
    const bool trim = opts.trim_to_ball && d == 1;
    const double trim_radius = gamma + alpha;

    GaussianCover cover;
    cover.alpha = alpha;
    cover.metric = MetricTag::tv;
    cover.recipe = json{{"kind", "gaussian_ball"},
                        {"version", 1},
                        {"center", to_json(center)},
                        {"alpha", alpha},
                        {"gamma", gamma},
                        {"sub_pitch_factor", opts.sub_pitch_factor},
                        {"trim_to_ball", opts.trim_to_ball},
                        {"element_cap", opts.element_cap}};
    std::unordered_set<std::string> seen;
    for (const auto& sc : scales) {
        if (trim) {
            // TV is minimized over the row at zero mean gap; skip rows whose
            // variance part alone already leaves the trim radius.
            const Gaussian var_probe(center.mean(), a * sc.sigma * a.transpose());
            if (tv_gaussian_1d_exact(center, var_probe) > trim_radius) continue;
        }
        for (const auto& loc : locations) {
            Gaussian base(sc.sigma_sqrt * loc, sc.sigma);
            Gaussian element = affine_transform(base, a, center.mean());
            if (trim && tv_gaussian_1d_exact(center, element) > trim_radius) continue;
            if (seen.insert(gaussian_key(element)).second) {
                cover.elements.push_back(std::move(element));
            }
        }
    }
    cover.built_tick = provenance_tick();
    return cover;
}

// ---------------------------------------------------------------------------
// Bounded box lattice (d = 1) and bounded cover
// ---------------------------------------------------------------------------

GaussianLattice gaussian_box_lattice(const GaussianBox& box, double alpha) {
    if (box.dim != 1) throw InvalidConfig("gaussian_box_lattice supports d = 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("lattice alpha outside (0,1)");
    GaussianLattice lat;
    lat.box = box;
    lat.alpha = alpha;
    const double sqrt_lmin = std::sqrt(box.eig_min);
    lat.mean_pitch = 2.0 * alpha * sqrt_lmin;
    lat.mean_lo = -box.mean_bound;
    lat.mean_count =
        box.mean_bound == 0.0
            ? 1
            : static_cast<long>(std::ceil(2.0 * box.mean_bound / lat.mean_pitch)) + 1;
    lat.var_pitch = kSqrt2 * alpha * box.eig_min;
    lat.var_lo = box.eig_min;
    lat.var_count =
        box.eig_max == box.eig_min
            ? 1
            : static_cast<long>(std::ceil((box.eig_max - box.eig_min) / lat.var_pitch)) + 1;
    lat.claimed_gamma = 2.0 * alpha;
    lat.recipe = json{{"kind", "gaussian_box"},
                      {"version", 1},
                      {"box", box_to_json(box)},
                      {"alpha", alpha}};
    lat.built_tick = provenance_tick();
    return lat;
}

Gaussian GaussianLattice::element(long mean_idx, long var_idx) const {
    Eigen::VectorXd mu(1);
    mu << mean_lo + static_cast<double>(mean_idx) * mean_pitch;
    Eigen::MatrixXd cov(1, 1);
    cov << var_lo + static_cast<double>(var_idx) * var_pitch;
    return Gaussian(mu, cov);
}

void GaussianLattice::for_each_near(const Gaussian& y, double radius,
                                    const std::function<void(long, long)>& fn) const {
    if (y.dim() != 1) throw DimensionMismatch("lattice query needs d = 1");
    const double ym = y.mean()(0);
    const double yv = y.cov()(0, 0);
    const long vi0 = std::clamp<long>(
        static_cast<long>(std::llround((yv - var_lo) / var_pitch)), 0, var_count - 1);
    // Rows are cut by the zero-mean-gap variance TV, which lower-bounds the
    // whole row (TV grows with the mean gap at fixed variances) and is
    // monotone in the variance gap. Within a row the mean-gap monotonicity
    // lets the scan expand outward from the projected index.
    auto row_reachable = [&](long vi) {
        const double v = var_lo + static_cast<double>(vi) * var_pitch;
        Eigen::MatrixXd cov(1, 1);
        cov << v;
        Eigen::VectorXd mu(1);
        mu << ym;
        return tv_gaussian_1d_exact(y, Gaussian(mu, cov)) <= radius;
    };
    auto scan_row = [&](long vi) {
        const long mi0 = std::clamp<long>(
            static_cast<long>(std::llround((ym - mean_lo) / mean_pitch)), 0, mean_count - 1);
        for (long mi = mi0; mi < mean_count; ++mi) {
            if (tv_gaussian_1d_exact(y, element(mi, vi)) > radius) break;
            fn(mi, vi);
        }
        for (long mi = mi0 - 1; mi >= 0; --mi) {
            if (tv_gaussian_1d_exact(y, element(mi, vi)) > radius) break;
            fn(mi, vi);
        }
    };
    for (long vi = vi0; vi < var_count && row_reachable(vi); ++vi) scan_row(vi);
    for (long vi = vi0 - 1; vi >= 0 && row_reachable(vi); --vi) scan_row(vi);
}

std::vector<Gaussian> GaussianLattice::materialize(size_t cap) const {
    if (total_count() > static_cast<double>(cap)) {
        throw InfeasibleBudget("lattice materialization exceeds the cap");
    }
    std::vector<Gaussian> out;
    out.reserve(static_cast<size_t>(total_count()));
    for (long mi = 0; mi < mean_count; ++mi) {
        for (long vi = 0; vi < var_count; ++vi) out.push_back(element(mi, vi));
    }
    return out;
}

namespace {

double normal_quantile(double p) {
    double lo = 0.0, hi = 40.0;
    for (int i = 0; i < 200; ++i) {
        const double mid = 0.5 * (lo + hi);
        (normal_cdf(mid) < p ? lo : hi) = mid;
    }
    return 0.5 * (lo + hi);
}

// Rectangle bound on the largest gamma-ball in the lattice. Any element
// within TV gamma of a probe must have (a) a mean gap below the midpoint-CDF
// bound and (b) a variance inside the same-mean TV window of the probe's
// variance, so the ball count is at most (#means in the gap window) times
// the widest variance window over in-box probes.
double lattice_claimed_t(const GaussianLattice& lat, double gamma) {
    const double var_hi = lat.var_lo + static_cast<double>(lat.var_count - 1) * lat.var_pitch;
    const double sigma_max = std::sqrt(std::max(var_hi, lat.box.eig_max));
    const double mean_window = 2.0 * sigma_max * normal_quantile(0.5 * (1.0 + gamma));
    const double cols = std::floor(2.0 * mean_window / lat.mean_pitch) + 2.0;

    auto var_only_tv = [](double v1, double v2) {
        Eigen::VectorXd mu = Eigen::VectorXd::Zero(1);
        Eigen::MatrixXd c1(1, 1), c2(1, 1);
        c1 << v1;
        c2 << v2;
        return tv_gaussian_1d_exact(Gaussian(mu, c1), Gaussian(mu, c2));
    };
    long rows = 1;
    const double step = lat.var_pitch / 8.0;
    for (double vp = lat.box.eig_min; vp <= lat.box.eig_max + step; vp += step) {
        long count = 0;
        for (long vi = 0; vi < lat.var_count; ++vi) {
            const double v = lat.var_lo + static_cast<double>(vi) * lat.var_pitch;
            if (var_only_tv(vp, v) <= gamma) ++count;
        }
        rows = std::max(rows, count);
    }
    return cols * static_cast<double>(rows + 1);
}

}  // namespace

GaussianCover bounded_gaussian_cover(const GaussianBox& box, double alpha,
                                     const BoundedCoverOptions& opts) {
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("cover alpha outside (0,1)");
    GaussianCover cover;
    cover.alpha = alpha;
    cover.metric = MetricTag::tv;
    cover.recipe = json{{"kind", "gaussian_box"},
                        {"version", 1},
                        {"box", box_to_json(box)},
                        {"alpha", alpha},
                        {"element_cap", opts.element_cap}};
    cover.claimed_gamma = 2.0 * alpha;

    if (box.dim == 1 && alpha >= kBallGammaMax) {
        GaussianLattice lat = gaussian_box_lattice(box, alpha);
        cover.elements = lat.materialize(opts.element_cap);
        cover.claimed_t = lattice_claimed_t(lat, 2.0 * alpha);
        cover.built_tick = provenance_tick();
        return cover;
    }

    if (box.dim == 1) {
        // Fine radius: tile ball covers over a lattice of centers so every
        // in-box Gaussian sits inside some tile's TV ball.
        const double gamma_ball = std::min(kBallGammaMax, 2.0 * alpha);
        GaussianLattice centers = gaussian_box_lattice(box, gamma_ball);
        const double per_ball_estimate =
            (2.0 * 200.0 * gamma_ball * kSqrt2 / (kSqrt2 * alpha) + 3.0) *
            (2.0 * 200.0 * gamma_ball / (0.5 * kSqrt2 * alpha) + 3.0);
        if (centers.total_count() * per_ball_estimate > static_cast<double>(opts.element_cap)) {
            throw InfeasibleBudget("tiled cover projects beyond the element cap");
        }
        std::unordered_set<std::string> seen;
        for (long mi = 0; mi < centers.mean_count; ++mi) {
            for (long vi = 0; vi < centers.var_count; ++vi) {
                GaussianCover tile =
                    gaussian_ball_cover(centers.element(mi, vi), alpha, gamma_ball, opts.ball);
                for (auto& e : tile.elements) {
                    if (seen.insert(gaussian_key(e)).second) {
                        if (cover.elements.size() >= opts.element_cap) {
                            throw InfeasibleBudget("tiled cover exceeded the element cap");
                        }
                        cover.elements.push_back(std::move(e));
                    }
                }
            }
        }
        cover.recipe["gamma_ball"] = gamma_ball;
        cover.recipe["ball"] = json{{"sub_pitch_factor", opts.ball.sub_pitch_factor},
                                    {"trim_to_ball", opts.ball.trim_to_ball}};
        if (cover.elements.size() <= 50'000) {
            // Element-centered counts with headroom for probes between tiles.
            long best = 0;
            for (const auto& e : cover.elements) {
                long count = 0;
                for (const auto& f : cover.elements) {
                    if (tv_gaussian_1d_exact(e, f) <= 2.0 * alpha) ++count;
                }
                best = std::max(best, count);
            }
            cover.claimed_t = static_cast<double>(best) * 2.0;
        }
        cover.built_tick = provenance_tick();
        return cover;
    }

    if (box.dim != 2) throw InvalidConfig("bounded cover supports d in {1, 2}");

    // d = 2 direct lattice over covariance entries and means; meant for tiny
    // boxes only.
    const int d = 2;
    const double sqrt_lmin = std::sqrt(box.eig_min);
    const double mean_pitch = 2.0 * alpha * sqrt_lmin / std::sqrt(static_cast<double>(d));
    const double entry_pitch = kSqrt2 * alpha * box.eig_min / static_cast<double>(d);
    const long mean_n =
        box.mean_bound == 0.0
            ? 1
            : static_cast<long>(std::ceil(2.0 * box.mean_bound / mean_pitch)) + 1;
    const long diag_n =
        box.eig_max == box.eig_min
            ? 1
            : static_cast<long>(std::ceil((box.eig_max - box.eig_min) / entry_pitch)) + 1;
    const long off_n = static_cast<long>(std::ceil(2.0 * box.eig_max / entry_pitch)) + 1;
    const double projected = std::pow(static_cast<double>(mean_n), 2) *
                             std::pow(static_cast<double>(diag_n), 2) *
                             static_cast<double>(off_n);
    if (projected > static_cast<double>(opts.element_cap)) {
        throw InfeasibleBudget("d=2 box cover projects to " + std::to_string(projected));
    }
    const double eig_slack = entry_pitch * d;
    for (long i1 = 0; i1 < diag_n; ++i1) {
        for (long i2 = 0; i2 < diag_n; ++i2) {
            for (long i3 = 0; i3 < off_n; ++i3) {
                Eigen::MatrixXd cov(2, 2);
                cov(0, 0) = box.eig_min + static_cast<double>(i1) * entry_pitch;
                cov(1, 1) = box.eig_min + static_cast<double>(i2) * entry_pitch;
                cov(0, 1) = cov(1, 0) = -box.eig_max + static_cast<double>(i3) * entry_pitch;
                Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
                if (es.eigenvalues().minCoeff() < box.eig_min - eig_slack ||
                    es.eigenvalues().maxCoeff() > box.eig_max + eig_slack) {
                    continue;
                }
                if (es.eigenvalues().minCoeff() <= 0.0) continue;
                for (long m1 = 0; m1 < mean_n; ++m1) {
                    for (long m2 = 0; m2 < mean_n; ++m2) {
                        Eigen::VectorXd mu(2);
                        mu << -box.mean_bound + static_cast<double>(m1) * mean_pitch,
                            -box.mean_bound + static_cast<double>(m2) * mean_pitch;
                        cover.elements.emplace_back(mu, cov);
                        if (cover.elements.size() > opts.element_cap) {
                            throw InfeasibleBudget("d=2 box cover exceeded the element cap");
                        }
                    }
                }
            }
        }
    }
    if (cover.elements.size() <= 30'000) {
        long best = 0;
        for (const auto& e : cover.elements) {
            long count = 0;
            for (const auto& f : cover.elements) {
                if (tv_bounds_gaussian(e, f).upper <= 2.0 * alpha) ++count;
            }
            best = std::max(best, count);
        }
        cover.claimed_t = static_cast<double>(best) * 2.0;
    }
    cover.built_tick = provenance_tick();
    return cover;
}

// ---------------------------------------------------------------------------
// Dense mixture covers
// ---------------------------------------------------------------------------

MixtureCover dense_mixture_cover(const GaussianCover& component_cover, int k, double alpha,
                                 size_t element_cap) {
    if (k < 1) throw InvalidConfig("dense mixture cover needs k >= 1");
    if (!(alpha > 0.0 && alpha < 1.0)) throw InvalidConfig("cover alpha outside (0,1)");
    MixtureCover cover;
    cover.alpha = alpha;
    cover.metric = MetricTag::kappa_mix;
    cover.recipe = json{{"kind", "dense_mixture"},
                        {"version", 1},
                        {"component", component_cover.recipe},
                        {"k", k},
                        {"alpha", alpha},
                        {"element_cap", element_cap}};
    const size_t n = component_cover.elements.size();
    if (n == 0) throw InvalidConfig("empty component cover");

    double projected = 0.0;
    std::vector<SimplexCover> weight_covers;
    weight_covers.reserve(static_cast<size_t>(k));
    for (int s = 1; s <= k; ++s) {
        weight_covers.push_back(simplex_cover(s, alpha / static_cast<double>(s)));
        projected += std::pow(static_cast<double>(n), s) *
                     static_cast<double>(weight_covers.back().elements.size());
    }
    if (projected > static_cast<double>(element_cap)) {
        throw InfeasibleBudget("dense mixture cover projects to " + std::to_string(projected));
    }

    for (int s = 1; s <= k; ++s) {
        const auto& wc = weight_covers[static_cast<size_t>(s - 1)];
        std::vector<size_t> tuple(static_cast<size_t>(s), 0);
        std::function<void(int)> rec = [&](int depth) {
            if (depth == s) {
                std::vector<Gaussian> comps;
                comps.reserve(static_cast<size_t>(s));
                for (int i = 0; i < s; ++i) {
                    comps.push_back(component_cover.elements[tuple[static_cast<size_t>(i)]]);
                }
                for (const auto& w : wc.elements) {
                    cover.elements.emplace_back(w, comps);
                }
                return;
            }
            for (size_t i = 0; i < n; ++i) {
                tuple[static_cast<size_t>(depth)] = i;
                rec(depth + 1);
            }
        };
        rec(0);
    }
    if (component_cover.claimed_t) {
        double log_t = std::lgamma(static_cast<double>(k) + 1.0) +
                       static_cast<double>(k) *
                           std::log(*component_cover.claimed_t * static_cast<double>(k) / alpha);
        cover.claimed_t = std::exp(log_t);
        cover.claimed_gamma = component_cover.claimed_gamma;
    }
    cover.built_tick = provenance_tick();
    return cover;
}

DenseMixtureLattice dense_mixture_lattice(const GaussianLattice& component, int k, double alpha) {
    if (k < 1) throw InvalidConfig("dense mixture lattice needs k >= 1");
    DenseMixtureLattice lat;
    lat.component = component;
    lat.k = k;
    lat.alpha = alpha;
    double total_log = -std::numeric_limits<double>::infinity();
    for (int s = 1; s <= k; ++s) {
        lat.weight_grids.push_back(simplex_grid(s, alpha / static_cast<double>(s)));
        std::unordered_set<std::string> seen;
        long wcount = 0;
        lat.weight_grids.back().for_each([&](const Eigen::VectorXd& w) {
            if (seen.insert(vector_key(w)).second) ++wcount;
        });
        const double term = static_cast<double>(s) * std::log(component.total_count()) +
                            std::log(static_cast<double>(std::max<long>(wcount, 1)));
        total_log = std::max(total_log, term) +
                    std::log1p(std::exp(std::min(total_log, term) - std::max(total_log, term)));
    }
    lat.log_total_count = total_log;
    lat.recipe = json{{"kind", "dense_mixture_lattice"},
                      {"version", 1},
                      {"component", component.recipe},
                      {"k", k},
                      {"alpha", alpha}};
    lat.built_tick = provenance_tick();
    return lat;
}

double DenseMixtureLattice::total_count() const {
    if (log_total_count > 700.0) return std::numeric_limits<double>::infinity();
    return std::exp(log_total_count);
}

std::vector<std::pair<std::string, Mixture>> DenseMixtureLattice::enumerate_near(
    const Mixture& y, double radius) const {
    std::vector<std::pair<std::string, Mixture>> out;
    const int s = y.size();
    if (s > k) return out;
    const auto& wgrid = weight_grids[static_cast<size_t>(s - 1)];

    // Components of matching elements, slot by slot. The slot-aligned
    // construction certifies kappa_mix <= radius via the identity matching;
    // permuted matchings collapse onto the same canonical key.
    std::vector<std::vector<std::pair<long, long>>> slot_balls(static_cast<size_t>(s));
    for (int i = 0; i < s; ++i) {
        component.for_each_near(y.component(i), radius, [&](long mi, long vi) {
            slot_balls[static_cast<size_t>(i)].emplace_back(mi, vi);
        });
        if (slot_balls[static_cast<size_t>(i)].empty()) return out;
    }
    const auto wreps = wgrid.near(y.weights(), radius / static_cast<double>(s));
    if (wreps.empty()) return out;

    double combos = static_cast<double>(wreps.size());
    for (const auto& b : slot_balls) combos *= static_cast<double>(b.size());
    if (combos > 5e6) throw InfeasibleBudget("per-item enumeration too large");

    std::unordered_set<std::string> seen;
    std::vector<size_t> pick(static_cast<size_t>(s), 0);
    std::function<void(int)> rec = [&](int depth) {
        if (depth == s) {
            std::vector<Gaussian> comps;
            comps.reserve(static_cast<size_t>(s));
            for (int i = 0; i < s; ++i) {
                const auto& [mi, vi] = slot_balls[static_cast<size_t>(i)][pick[static_cast<size_t>(i)]];
                comps.push_back(component.element(mi, vi));
            }
            for (const auto& w : wreps) {
                Mixture m(w, comps);
                std::string key = canonical_key(m);
                if (seen.insert(key).second) out.emplace_back(std::move(key), std::move(m));
            }
            return;
        }
        for (size_t i = 0; i < slot_balls[static_cast<size_t>(depth)].size(); ++i) {
            pick[static_cast<size_t>(depth)] = i;
            rec(depth + 1);
        }
    };
    rec(0);
    std::sort(out.begin(), out.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    return out;
}

// ---------------------------------------------------------------------------
// Serialization and replay
// ---------------------------------------------------------------------------

namespace {

template <class H>
json cover_meta_json(const Cover<H>& c) {
    json j{{"alpha", c.alpha}, {"metric", metric_tag_name(c.metric)}, {"recipe", c.recipe}};
    if (c.claimed_t) j["claimed_t"] = *c.claimed_t;
    if (c.claimed_gamma) j["claimed_gamma"] = *c.claimed_gamma;
    return j;
}

}  // namespace

json cover_to_json(const SimplexCover& c, bool include_elements) {
    json j = cover_meta_json(c);
    if (include_elements) {
        json els = json::array();
        for (const auto& w : c.elements) {
            json jw = json::array();
            for (int i = 0; i < w.size(); ++i) jw.push_back(w(i));
            els.push_back(json{{"weights", jw}});
        }
        j["elements"] = els;
    }
    return j;
}

json cover_to_json(const GaussianCover& c, bool include_elements) {
    json j = cover_meta_json(c);
    if (include_elements) {
        json els = json::array();
        for (const auto& g : c.elements) els.push_back(to_json(g));
        j["elements"] = els;
    }
    return j;
}

json cover_to_json(const MixtureCover& c, bool include_elements) {
    json j = cover_meta_json(c);
    if (include_elements) {
        json els = json::array();
        for (const auto& m : c.elements) els.push_back(to_json(m));
        j["elements"] = els;
    }
    return j;
}

SimplexCover replay_simplex_cover(const json& recipe) {
    if (recipe.at("kind").get<std::string>() != "simplex") {
        throw InvalidConfig("recipe kind is not simplex");
    }
    return simplex_cover(recipe.at("k").get<int>(), recipe.at("alpha").get<double>());
}

GaussianCover replay_gaussian_cover(const json& recipe) {
    const std::string kind = recipe.at("kind").get<std::string>();
    if (kind == "gaussian_ball") {
        const Mixture center = mixture_from_json(recipe.at("center"));
        BallCoverOptions opts;
        opts.sub_pitch_factor = recipe.value("sub_pitch_factor", 1.0);
        opts.trim_to_ball = recipe.value("trim_to_ball", true);
        opts.element_cap = recipe.value("element_cap", size_t{5'000'000});
        return gaussian_ball_cover(center.component(0), recipe.at("alpha").get<double>(),
                                   recipe.at("gamma").get<double>(), opts);
    }
    if (kind == "gaussian_box") {
        BoundedCoverOptions opts;
        opts.element_cap = recipe.value("element_cap", size_t{5'000'000});
        if (recipe.contains("ball")) {
            opts.ball.sub_pitch_factor = recipe["ball"].value("sub_pitch_factor", 1.0);
            opts.ball.trim_to_ball = recipe["ball"].value("trim_to_ball", true);
        }
        return bounded_gaussian_cover(box_from_json(recipe.at("box")),
                                      recipe.at("alpha").get<double>(), opts);
    }
    throw InvalidConfig("unknown gaussian cover recipe kind: " + kind);
}

MixtureCover replay_mixture_cover(const json& recipe) {
    if (recipe.at("kind").get<std::string>() != "dense_mixture") {
        throw InvalidConfig("recipe kind is not dense_mixture");
    }
    GaussianCover comp = replay_gaussian_cover(recipe.at("component"));
    return dense_mixture_cover(comp, recipe.at("k").get<int>(), recipe.at("alpha").get<double>(),
                               recipe.value("element_cap", size_t{5'000'000}));
}

std::vector<Gaussian> sample_box_gaussians(const GaussianBox& box, size_t n, RngStream& rng) {
    std::vector<Gaussian> out;
    out.reserve(n);
    for (size_t i = 0; i < n; ++i) {
        Eigen::VectorXd mu(box.dim);
        for (int a = 0; a < box.dim; ++a) mu(a) = rng.uniform(-box.mean_bound, box.mean_bound);
        if (box.dim == 1) {
            Eigen::MatrixXd cov(1, 1);
            cov << rng.uniform(box.eig_min, box.eig_max);
            out.emplace_back(mu, cov);
        } else {
            Eigen::VectorXd eigs(box.dim);
            for (int a = 0; a < box.dim; ++a) eigs(a) = rng.uniform(box.eig_min, box.eig_max);
            // Random rotation via QR of a Gaussian matrix.
            Eigen::MatrixXd g(box.dim, box.dim);
            for (int a = 0; a < box.dim; ++a) {
                for (int b = 0; b < box.dim; ++b) g(a, b) = rng.normal();
            }
            Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
            Eigen::MatrixXd q = qr.householderQ();
            Eigen::MatrixXd cov = q * eigs.asDiagonal() * q.transpose();
            cov = 0.5 * (cov + cov.transpose().eval());
            out.emplace_back(mu, cov);
        }
    }
    return out;
}

}  // namespace dpmix
