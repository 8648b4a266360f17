#include "dpmix/pipeline.hpp"

#include <algorithm>
#include <cmath>

#include "dpmix/parallel.hpp"

namespace dpmix {

namespace {

constexpr double kE = 2.7182818284590452354;

double constant_or(const std::map<std::string, double>& c, const std::string& name, double dflt) {
    auto it = c.find(name);
    return it == c.end() ? dflt : it->second;
}

uint64_t fnv1a(const std::string& s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

std::string hex64(uint64_t v) {
    char buf[20];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

double claim_inequality_f(double x) { return 1.0 + std::log(2.0) / x + std::log(x) / x; }

double claim_beta_prime(double c1, double c2, double beta) {
    return beta / (2.0 * kE * c1 * std::log(kE * c1 * c2 / beta));
}

double claim_check_value(double c1, double c2, double beta) {
    const double bp = claim_beta_prime(c1, c2, beta);
    return c1 * bp * std::log(c2 / bp);
}

PipelineParams derive_parameters(double alpha, double beta, const PrivacyParams& priv, int k,
                                 int d, double cover_t, const DecodeParams& decode,
                                 const std::map<std::string, double>& constants) {
    if (!(alpha > 0.0 && alpha < 1.0) || !(beta > 0.0 && beta < 1.0)) {
        throw InvalidConfig("alpha and beta must lie in (0,1)");
    }
    if (k < 1 || d < 1) throw InvalidConfig("k and d must be >= 1");

    PipelineParams p;
    p.alpha = alpha;
    p.beta = beta;
    p.priv = priv;
    p.k = k;
    p.d = d;
    p.decode = decode;
    p.constants = constants;
    p.alpha_prime = alpha / 15.0;

    const double kd = static_cast<double>(k);
    const double ap = p.alpha_prime;
    const double m = static_cast<double>(decode.m);
    const double log_l = std::log(static_cast<double>(decode.L_budget));
    const double c_rounds = constant_or(constants, "c_rounds", 1.0);
    const double c_m3 = constant_or(constants, "c_m3", 1.0);

    p.log_t1 = std::lgamma(kd + 1.0) + kd * (std::log(cover_t) + std::log(kd) - std::log(ap));

    // beta' appears inside L2; iterate the substitution to a fixed point
    // (the map is monotone, so this converges quickly).
    double bp = std::min(beta / 2.0, 0.1);
    double m1 = 0.0, log_l1 = 0.0, m2 = 0.0, log_l2 = 0.0;
    for (int it = 0; it < 200; ++it) {
        m1 = (2.0 * m * kd + 8.0 * kd * std::log(1.0 / bp)) / ap;
        log_l1 = log_l + m * std::log(10.0 * kE * kd * std::log(1.0 / bp) / ap);
        const double log_inv_2kb = std::log(1.0 / (2.0 * kd * bp));
        m2 = (2.0 * m1 + 8.0 * log_inv_2kb) / (1.0 - ap);
        log_l2 = (kd + 1.0) * (std::log(kd) + log_l1 - std::log(ap)) +
                 m1 * std::log(10.0 * kE * log_inv_2kb / (1.0 - ap));
        const double x = std::log(6.0 * kE * kd / (priv.epsilon * beta * priv.delta)) + p.log_t1 +
                         log_l2;
        const double next = beta * priv.epsilon / (12.0 * kE * kd * x);
        if (std::abs(next - bp) <= 1e-6 * bp) {
            bp = next;
            break;
        }
        bp = next;
    }
    p.beta_prime = bp;
    p.m1 = m1;
    p.log_L1 = log_l1;
    p.m2 = m2;
    p.log_L2 = log_l2;
    p.rounds = c_rounds *
               (std::log(1.0 / priv.delta) + p.log_t1 + log_l2 + std::log(1.0 / bp)) /
               priv.epsilon;
    p.m3 = c_m3 * (log_l2 + std::log(1.0 / bp)) / (ap * ap) + m2;
    const double total = p.rounds * p.m3;
    p.executable = std::isfinite(total) && total > 0.0 && total <= 1e8;
    p.mode = PipelineMode::theory;
    return p;
}

json pipeline_params_to_json(const PipelineParams& p) {
    json j{{"alpha", p.alpha},
           {"beta", p.beta},
           {"epsilon", p.priv.epsilon},
           {"delta", p.priv.delta},
           {"k", p.k},
           {"d", p.d},
           {"mode", p.mode == PipelineMode::theory ? "theory" : "practical"},
           {"alpha_prime", p.alpha_prime},
           {"beta_prime", p.beta_prime},
           {"m1", p.m1},
           {"log_L1", p.log_L1},
           {"m2", p.m2},
           {"log_L2", p.log_L2},
           {"m3", p.m3},
           {"log_t1", p.log_t1},
           {"rounds", p.rounds},
           {"executable", p.executable},
           {"T_run", p.T_run},
           {"m2_run", p.m2_run},
           {"m3_run", p.m3_run},
           {"mde_mc_n", p.mde_mc_n},
           {"filter_mc_n", p.filter_mc_n},
           {"filter_conf", p.filter_conf},
           {"survivor_cap", p.survivor_cap},
           {"decode", json{{"m", p.decode.m},
                           {"L_budget", p.decode.L_budget},
                           {"alpha", p.decode.alpha},
                           {"beta", p.decode.beta},
                           {"gamma", p.decode.gamma},
                           {"subset_size", p.decode.subset_size},
                           {"grid_bits", p.decode.grid_bits}}},
           {"overrides", p.overrides}};
    json consts = json::object();
    for (const auto& [name, v] : p.constants) consts[name] = v;
    j["constants"] = consts;
    return j;
}

std::vector<HypothesisList> pipeline_filtered_lists(const Dataset& data,
                                                    const PipelineParams& params, uint64_t seed,
                                                    std::vector<ChunkReport>* reports) {
    if (params.mode != PipelineMode::practical) {
        throw InvalidConfig("non-private phases run in practical mode only");
    }
    const long t = params.T_run;
    const long m2 = params.m2_run;
    const long m3 = params.m3_run;
    if (t < 1 || m3 < 1 || m2 < 1 || m2 > m3) throw InvalidConfig("bad chunk sizes");
    if (static_cast<long>(data.size()) < t * m3) {
        throw InsufficientData("need " + std::to_string(t * m3) + " points, have " +
                               std::to_string(data.size()));
    }

    std::vector<HypothesisList> filtered(static_cast<size_t>(t));
    std::vector<ChunkReport> chunk_reports(static_cast<size_t>(t));
    const double threshold = 11.0 * params.alpha_prime / 2.0;

    parallel_for(static_cast<size_t>(t), [&](size_t ci) {
        const long offset = static_cast<long>(ci) * m3;
        Dataset decode_part, mde_part;
        decode_part.seed = mde_part.seed = data.seed;
        decode_part.created_tick = mde_part.created_tick = data.created_tick;
        decode_part.points.assign(data.points.begin() + offset,
                                  data.points.begin() + offset + m2);
        mde_part.points.assign(data.points.begin() + offset + m2,
                               data.points.begin() + offset + m3);

        RngStream decode_rng(derive_seed(seed, 3 * ci));
        RngStream mde_rng(derive_seed(seed, 3 * ci + 1));
        RngStream filter_rng(derive_seed(seed, 3 * ci + 2));

        HypothesisList list = dense_mixture_list_decode(decode_part, params.k, params.decode,
                                                        decode_rng, params.decode_opts);
        list.source_chunk = static_cast<int>(ci);
        const int pick = mde_select(list, mde_part, params.mde_mc_n, mde_rng);
        const Mixture& anchor = list.items[static_cast<size_t>(pick)];

        // Keep items whose lower confidence edge clears the filter radius.
        std::vector<std::pair<double, size_t>> keep;
        json estimates = json::array();
        for (size_t i = 0; i < list.items.size(); ++i) {
            const TvEstimate est = tv_mc_estimate(list.items[i], anchor, params.filter_mc_n,
                                                  params.filter_conf, filter_rng);
            estimates.push_back(json{{"item", i},
                                     {"tv", est.value},
                                     {"half_width", est.half_width}});
            if (est.value - est.half_width < threshold) keep.emplace_back(est.value, i);
        }
        std::sort(keep.begin(), keep.end());
        if (static_cast<long>(keep.size()) > params.survivor_cap) {
            keep.resize(static_cast<size_t>(params.survivor_cap));
        }
        HypothesisList survivors;
        survivors.source_chunk = static_cast<int>(ci);
        survivors.budget = params.survivor_cap;
        for (const auto& [tv, idx] : keep) survivors.items.push_back(list.items[idx]);

        ChunkReport report;
        report.chunk = static_cast<int>(ci);
        report.list_size = static_cast<long>(list.items.size());
        report.survivors = static_cast<long>(survivors.items.size());
        report.mde_index = pick;
        report.tv_estimates = std::move(estimates);
        filtered[ci] = std::move(survivors);
        chunk_reports[ci] = std::move(report);
    });

    if (reports) *reports = std::move(chunk_reports);
    return filtered;
}

namespace {

template <class CoverT, class SelectFn>
LearnResult learn_common(const Dataset& data, const PipelineParams& params, const CoverT& cover,
                         RngStream& rng, SelectFn&& select) {
    if (cover.built_tick >= data.created_tick) {
        throw InvalidConfig("candidate space must be constructed before the data is read");
    }
    LearnResult result;
    result.filtered_lists = pipeline_filtered_lists(data, params, rng.seed(), &result.chunk_reports);
    RngStream select_rng = rng.split(0x5e1ec7ULL);
    result.selected = select(result.filtered_lists, select_rng);

    json chunks = json::array();
    for (const auto& r : result.chunk_reports) {
        chunks.push_back(json{{"chunk", r.chunk},
                              {"list_size", r.list_size},
                              {"survivors", r.survivors},
                              {"mde_index", r.mde_index},
                              {"tv_estimates", r.tv_estimates}});
    }
    result.manifest = json{
        {"params", pipeline_params_to_json(params)},
        {"seed", rng.seed()},
        {"cover_recipe_hash", hex64(fnv1a(cover.recipe.dump()))},
        {"chunks", chunks},
        {"selected", result.selected.is_bottom ? json("BOTTOM") : to_json(*result.selected.hypothesis)},
        {"selected_score", result.selected.score},
        {"bottom", result.selected.is_bottom}};
    return result;
}

}  // namespace

LearnResult learn_gmm_dp(const Dataset& data, const PipelineParams& params,
                         const DenseMixtureLattice& cover, RngStream& rng) {
    return learn_common(data, params, cover, rng,
                        [&](const std::vector<HypothesisList>& lists, RngStream& select_rng) {
                            return pcms(lists, cover, params.priv, params.beta, select_rng);
                        });
}

LearnResult learn_gmm_dp(const Dataset& data, const PipelineParams& params,
                         const MixtureCover& cover, const MixtureMetric& metric, RngStream& rng) {
    return learn_common(data, params, cover, rng,
                        [&](const std::vector<HypothesisList>& lists, RngStream& select_rng) {
                            return pcms(lists, cover, metric, cover.metric, params.priv,
                                        params.beta, select_rng);
                        });
}

}  // namespace dpmix
