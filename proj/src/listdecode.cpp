#include "dpmix/listdecode.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <unordered_set>

namespace dpmix {

namespace {

double lchoose(double n, double k) {
    if (k < 0.0 || k > n) return -std::numeric_limits<double>::infinity();
    return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}

double choose_or_inf(long n, long k) {
    const double lc = lchoose(static_cast<double>(n), static_cast<double>(k));
    return lc > 60.0 ? std::numeric_limits<double>::infinity() : std::round(std::exp(lc));
}

void for_each_combination(long n, long k, const std::function<void(const std::vector<long>&)>& fn) {
    std::vector<long> idx(static_cast<size_t>(k));
    for (long i = 0; i < k; ++i) idx[static_cast<size_t>(i)] = i;
    for (;;) {
        fn(idx);
        long pos = k - 1;
        while (pos >= 0 && idx[static_cast<size_t>(pos)] == n - k + pos) --pos;
        if (pos < 0) return;
        ++idx[static_cast<size_t>(pos)];
        for (long j = pos + 1; j < k; ++j) {
            idx[static_cast<size_t>(j)] = idx[static_cast<size_t>(j - 1)] + 1;
        }
    }
}

std::vector<long> random_distinct(long n, long k, RngStream& rng) {
    std::vector<long> pool(static_cast<size_t>(n));
    for (long i = 0; i < n; ++i) pool[static_cast<size_t>(i)] = i;
    for (long i = 0; i < k; ++i) {
        const long j = i + rng.uniform_int(n - i);
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
    }
    std::vector<long> out(pool.begin(), pool.begin() + k);
    std::sort(out.begin(), out.end());
    return out;
}

std::string gaussian_item_key(const Gaussian& g) {
    char buf[48];
    std::string s;
    for (int i = 0; i < g.dim(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,", g.mean()(i));
        s += buf;
    }
    s += '|';
    for (int i = 0; i < g.dim(); ++i) {
        for (int j = 0; j < g.dim(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g,", g.cov()(i, j));
            s += buf;
        }
    }
    return s;
}

struct GaussianEmitter {
    std::vector<Gaussian> items;
    std::unordered_set<std::string> seen;
    long emitted_raw = 0;

    void emit(Gaussian g) {
        ++emitted_raw;
        if (seen.insert(gaussian_item_key(g)).second) items.push_back(std::move(g));
    }
};

// Fit + nested dyadic refinement grid for one subset of points.
void decode_subset(const std::vector<Eigen::VectorXd>& pts, const std::vector<long>& subset,
                   const DecodeParams& p, const DecodeOptions& opts, GaussianEmitter& out) {
    const int d = static_cast<int>(pts.front().size());
    const long tau = static_cast<long>(subset.size());
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(d);
    for (long i : subset) mean += pts[static_cast<size_t>(i)];
    mean /= static_cast<double>(tau);
    Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(d, d);
    for (long i : subset) {
        const Eigen::VectorXd c = pts[static_cast<size_t>(i)] - mean;
        cov += c * c.transpose();
    }
    cov /= static_cast<double>(tau);
    const double reg = std::max(cov.trace() / d * 1e-6, 1e-12);
    cov.diagonal().array() += reg;

    Eigen::VectorXd axis_sd(d);
    for (int a = 0; a < d; ++a) axis_sd(a) = std::sqrt(cov(a, a));

    const long half = 1L << p.grid_bits;
    std::vector<double> offsets;
    for (long i = -half; i <= half; ++i) {
        offsets.push_back(static_cast<double>(i) / static_cast<double>(half));
    }

    std::vector<long> pick(static_cast<size_t>(d), 0);
    std::function<void(int, Eigen::VectorXd&)> rec = [&](int depth, Eigen::VectorXd& mu) {
        if (depth == d) {
            for (double f : offsets) {
                const double scale = std::exp(f * opts.grid_scale_range);
                out.emit(Gaussian(mu, cov * scale));
            }
            return;
        }
        for (double u : offsets) {
            mu(depth) = mean(depth) + u * opts.grid_mean_range * axis_sd(depth);
            rec(depth + 1, mu);
        }
    };
    Eigen::VectorXd mu(d);
    rec(0, mu);
}

// Greedy TV-net thinning: keep an item unless a kept one is within
// `separation`, stopping once the budget is full. Keeps the first
// representative of each cluster, so the minimum distance to any target
// degrades by at most `separation` for targets represented before the stop.
std::vector<Gaussian> thin_gaussians(std::vector<Gaussian> items, double separation, long budget) {
    if (static_cast<long>(items.size()) <= budget) return items;
    std::vector<Gaussian> kept;
    std::vector<std::pair<double, double>> kept_geom;  // mean(0), sd(0) for d=1 quick reject
    const bool d1 = items.front().dim() == 1;
    for (auto& g : items) {
        bool close = false;
        const double gm = d1 ? g.mean()(0) : 0.0;
        const double gs = d1 ? std::sqrt(g.cov()(0, 0)) : 0.0;
        for (size_t i = 0; i < kept.size(); ++i) {
            if (d1) {
                // Mean gap alone already forces TV above the separation when
                // 2 Phi(gap / (2 max sd)) - 1 > separation.
                const double gap = std::abs(gm - kept_geom[i].first);
                const double smax = std::max(gs, kept_geom[i].second);
                if (2.0 * normal_cdf(gap / (2.0 * smax)) - 1.0 > separation) continue;
                if (tv_gaussian_1d_exact(g, kept[i]) <= separation) {
                    close = true;
                    break;
                }
            } else if (tv_bounds_gaussian(g, kept[i]).upper <= separation) {
                close = true;
                break;
            }
        }
        if (!close) {
            kept_geom.emplace_back(gm, gs);
            kept.push_back(std::move(g));
            if (static_cast<long>(kept.size()) >= budget) break;
        }
    }
    return kept;
}

// Trimmed average log density: mean of the top `keep_frac` per-point log
// densities, so a candidate is scored on the points it explains and
// contamination cannot drag down a good component fit.
double trimmed_log_likelihood(const Gaussian& g, const std::vector<Eigen::VectorXd>& pts,
                              double keep_frac) {
    std::vector<double> ld;
    ld.reserve(pts.size());
    for (const auto& x : pts) ld.push_back(g.log_density(x));
    const size_t keep = std::max<size_t>(
        1, static_cast<size_t>(std::floor(keep_frac * static_cast<double>(pts.size()))));
    std::nth_element(ld.begin(), ld.begin() + static_cast<long>(keep) - 1, ld.end(),
                     std::greater<>());
    double acc = 0.0;
    for (size_t i = 0; i < keep; ++i) acc += ld[i];
    return acc / static_cast<double>(keep);
}

HypothesisList finalize(std::vector<Gaussian> items, const DecodeParams& p,
                        const DecodeOptions& opts, const std::vector<Eigen::VectorXd>& pts,
                        json manifest) {
    const double sep = opts.thin_separation > 0.0 ? opts.thin_separation : p.alpha / 4.0;
    const long pool = std::max(p.L_budget, opts.rank_pool);
    items = thin_gaussians(std::move(items), sep, pool);
    if (static_cast<long>(items.size()) > p.L_budget) {
        // Keep the candidates that explain the data best (stable order on ties).
        std::vector<std::pair<double, size_t>> scored;
        scored.reserve(items.size());
        for (size_t i = 0; i < items.size(); ++i) {
            scored.emplace_back(-trimmed_log_likelihood(items[i], pts, opts.rank_trim), i);
        }
        std::stable_sort(scored.begin(), scored.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::vector<Gaussian> top;
        top.reserve(static_cast<size_t>(p.L_budget));
        for (long i = 0; i < p.L_budget; ++i) {
            top.push_back(std::move(items[scored[static_cast<size_t>(i)].second]));
        }
        items = std::move(top);
    }
    HypothesisList list;
    list.budget = p.L_budget;
    manifest["thin_separation"] = sep;
    manifest["items"] = static_cast<long>(items.size());
    list.manifest = std::move(manifest);
    list.items.reserve(items.size());
    for (auto& g : items) list.items.push_back(Mixture::single(std::move(g)));
    return list;
}

}  // namespace

long contamination_sample_count(const DecodeParams& p) {
    if (!(p.gamma >= 0.0 && p.gamma < 1.0)) throw InvalidConfig("gamma outside [0,1)");
    if (!(p.beta > 0.0 && p.beta < 1.0)) throw InvalidConfig("beta outside (0,1)");
    const double n = (2.0 * static_cast<double>(p.m) + 8.0 * std::log(1.0 / p.beta)) /
                     (1.0 - p.gamma);
    return static_cast<long>(std::ceil(n - 1e-12));
}

HypothesisList gaussian_list_decode(const Dataset& data, const DecodeParams& p, RngStream& rng,
                                    const DecodeOptions& opts) {
    if (data.size() == 0) throw InsufficientData("empty dataset");
    const int d = data.dim();
    const long tau = p.subset_size > 0 ? p.subset_size : d + 2;
    if (static_cast<long>(data.size()) < p.m) {
        throw InsufficientData("need " + std::to_string(p.m) + " points, have " +
                               std::to_string(data.size()));
    }
    if (tau > static_cast<long>(data.size()) || tau > p.m) {
        throw InsufficientData("subset size " + std::to_string(tau) + " exceeds the sample");
    }

    // Size-m subsample (all points when the dataset is exactly m).
    std::vector<long> sub;
    if (static_cast<long>(data.size()) == p.m) {
        sub.resize(static_cast<size_t>(p.m));
        for (long i = 0; i < p.m; ++i) sub[static_cast<size_t>(i)] = i;
    } else {
        sub = random_distinct(static_cast<long>(data.size()), p.m, rng);
    }
    std::vector<Eigen::VectorXd> pts;
    pts.reserve(sub.size());
    for (long i : sub) pts.push_back(data.points[static_cast<size_t>(i)]);

    const double n_subsets = choose_or_inf(p.m, tau);
    GaussianEmitter emitter;
    const bool exhaustive = n_subsets <= static_cast<double>(opts.exhaustive_threshold);
    if (exhaustive) {
        for_each_combination(p.m, tau, [&](const std::vector<long>& subset) {
            decode_subset(pts, subset, p, opts, emitter);
        });
    } else {
        for (long t = 0; t < opts.exhaustive_threshold; ++t) {
            decode_subset(pts, random_distinct(p.m, tau, rng), p, opts, emitter);
        }
    }

    json manifest{{"op", "gaussian_list_decode"}, {"m", p.m},       {"N", p.m},
                  {"gamma", p.gamma},             {"budget", p.L_budget},
                  {"mode", exhaustive ? "exhaustive" : "random"},   {"seed", rng.seed()},
                  {"subset_size", tau},           {"grid_bits", p.grid_bits},
                  {"emitted_raw", emitter.emitted_raw}};
    return finalize(std::move(emitter.items), p, opts, pts, std::move(manifest));
}

HypothesisList lift_contamination(const Dataset& data, const DecodeParams& p, RngStream& rng,
                                  const DecodeOptions& opts) {
    const long n_needed = contamination_sample_count(p);
    if (static_cast<long>(data.size()) < n_needed) {
        throw InsufficientData("need " + std::to_string(n_needed) + " points, have " +
                               std::to_string(data.size()));
    }
    const int d = data.dim();
    const long tau = p.subset_size > 0 ? p.subset_size : d + 2;
    if (tau > p.m) throw InsufficientData("subset size exceeds m");
    const long n = n_needed;
    std::vector<Eigen::VectorXd> pts(data.points.begin(), data.points.begin() + n);

    const double m_subsets = choose_or_inf(n, p.m);
    GaussianEmitter emitter;
    long trials = 0;
    const bool exhaustive = m_subsets <= static_cast<double>(opts.exhaustive_threshold);
    if (exhaustive) {
        // The union over all m-subsets of the base decoder equals the base
        // decoder over all tau-subsets of the n points.
        for_each_combination(n, tau, [&](const std::vector<long>& subset) {
            decode_subset(pts, subset, p, opts, emitter);
        });
    } else {
        // Enough random m-subsets for one all-inlier draw w.p. >= 1 - beta,
        // with the inlier count at its binomial lower bound.
        const long inliers = static_cast<long>(
            std::ceil(static_cast<double>(n) * (1.0 - p.gamma) / 2.0 - 1e-12));
        const double log_p0 = lchoose(static_cast<double>(inliers), static_cast<double>(p.m)) -
                              lchoose(static_cast<double>(n), static_cast<double>(p.m));
        const double p0 = std::exp(log_p0);
        if (!(p0 > 0.0)) throw InvalidConfig("all-inlier subset probability underflows");
        trials = static_cast<long>(std::ceil(std::log(1.0 / p.beta) / -std::log1p(-p0)));
        trials = std::max<long>(trials, 1);
        for (long t = 0; t < trials; ++t) {
            const std::vector<long> msub = random_distinct(n, p.m, rng);
            for_each_combination(p.m, tau, [&](const std::vector<long>& subset) {
                std::vector<long> global(subset.size());
                for (size_t i = 0; i < subset.size(); ++i) {
                    global[i] = msub[static_cast<size_t>(subset[i])];
                }
                decode_subset(pts, global, p, opts, emitter);
            });
        }
    }

    json manifest{{"op", "lift_contamination"}, {"m", p.m},        {"N", n},
                  {"gamma", p.gamma},           {"budget", p.L_budget},
                  {"mode", exhaustive ? "exhaustive" : "random"},  {"seed", rng.seed()},
                  {"trials", trials},           {"subset_size", tau},
                  {"emitted_raw", emitter.emitted_raw}};
    return finalize(std::move(emitter.items), p, opts, pts, std::move(manifest));
}

HypothesisList dense_mixture_list_decode(const Dataset& data, int k, const DecodeParams& p,
                                         RngStream& rng, const DecodeOptions& opts) {
    if (k < 1) throw InvalidConfig("dense decode needs k >= 1");
    if (!(p.alpha > 0.0 && p.alpha < 1.0)) throw InvalidConfig("alpha outside (0,1)");
    const double kd = static_cast<double>(k);
    const double m1 = std::ceil((2.0 * static_cast<double>(p.m) + 8.0 * std::log(1.0 / p.beta)) *
                                kd / p.alpha);
    const double m_needed =
        std::ceil((2.0 * m1 + 8.0 * std::log(1.0 / (kd * p.beta))) / (1.0 - p.gamma));
    if (static_cast<double>(data.size()) < m_needed) {
        throw InsufficientData("need " + std::to_string(static_cast<long>(m_needed)) +
                               " points, have " + std::to_string(data.size()));
    }

    // Component decoding: each dense component keeps weight >= alpha/k of the
    // uncontaminated part, the rest acts as its adversary.
    DecodeParams comp_params = p;
    comp_params.gamma = 1.0 - (1.0 - p.gamma) * p.alpha / kd;
    comp_params.L_budget = opts.component_budget;
    Dataset prefix;
    prefix.seed = data.seed;
    prefix.created_tick = data.created_tick;
    const size_t take = std::min(data.size(), static_cast<size_t>(m_needed));
    prefix.points.assign(data.points.begin(), data.points.begin() + static_cast<long>(take));
    RngStream comp_rng = rng.split(1);
    HypothesisList comp_list = lift_contamination(prefix, comp_params, comp_rng, opts);

    HypothesisList out;
    out.budget = p.L_budget;
    std::unordered_set<std::string> seen;
    long emitted_raw = 0;
    const long n_comp = static_cast<long>(comp_list.items.size());
    for (int s = 1; s <= k; ++s) {
        SimplexCover wc = simplex_cover(s, p.alpha / static_cast<double>(s));
        std::vector<long> tuple(static_cast<size_t>(s), 0);
        bool full = false;
        std::function<void(int)> rec = [&](int depth) {
            if (full) return;
            if (depth == s) {
                std::vector<Gaussian> comps;
                comps.reserve(static_cast<size_t>(s));
                for (int i = 0; i < s; ++i) {
                    comps.push_back(
                        comp_list.items[static_cast<size_t>(tuple[static_cast<size_t>(i)])]
                            .component(0));
                }
                for (const auto& w : wc.elements) {
                    ++emitted_raw;
                    Mixture m(w, comps);
                    if (!seen.insert(canonical_key(m)).second) continue;
                    if (static_cast<long>(out.items.size()) >= p.L_budget) {
                        full = true;
                        return;
                    }
                    out.items.push_back(std::move(m));
                }
                return;
            }
            for (long i = 0; i < n_comp && !full; ++i) {
                tuple[static_cast<size_t>(depth)] = i;
                rec(depth + 1);
            }
        };
        rec(0);
    }

    out.manifest = json{{"op", "dense_mixture_list_decode"},
                        {"k", k},
                        {"m", p.m},
                        {"m_needed", static_cast<long>(m_needed)},
                        {"gamma", p.gamma},
                        {"component_gamma", comp_params.gamma},
                        {"budget", p.L_budget},
                        {"seed", rng.seed()},
                        {"component_items", n_comp},
                        {"component_manifest", comp_list.manifest},
                        {"emitted_raw", emitted_raw}};
    return out;
}

json hypothesis_list_to_json(const HypothesisList& list) {
    json items = json::array();
    for (const auto& m : list.items) items.push_back(to_json(m));
    return json{{"items", items},
                {"source_chunk", list.source_chunk},
                {"budget", list.budget},
                {"manifest", list.manifest}};
}

HypothesisList hypothesis_list_from_json(const json& j) {
    HypothesisList list;
    list.source_chunk = j.value("source_chunk", -1);
    list.budget = j.value("budget", 0L);
    list.manifest = j.value("manifest", json::object());
    for (const auto& item : j.at("items")) list.items.push_back(mixture_from_json(item));
    return list;
}

}  // namespace dpmix
