#include "dpmix/private_select.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_map>

namespace dpmix {

long required_rounds(double t, double q, double beta, const PrivacyParams& priv, double c) {
    if (!(c > 0.0)) throw InvalidConfig("round constant must be positive");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidConfig("beta outside (0,1)");
    const double v = c *
                     (std::log(1.0 / priv.delta) + std::log(t) + std::log(q) +
                      std::log(1.0 / beta)) /
                     priv.epsilon;
    if (!(v < 9e18)) throw Overflow("required rounds not representable");
    return static_cast<long>(std::ceil(v - 1e-12));
}

ScoreTable score_table(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                       double radius, const MixtureMetric& metric, MetricTag metric_tag) {
    if (metric_tag != cover.metric) {
        throw MetricMismatch("cover metric " + metric_tag_name(cover.metric) +
                             " vs supplied " + metric_tag_name(metric_tag));
    }
    ScoreTable table;
    table.rounds = static_cast<int>(lists.size());
    table.radius = radius;
    for (size_t e = 0; e < cover.elements.size(); ++e) {
        int count = 0;
        for (const auto& list : lists) {
            for (const auto& item : list.items) {
                if (metric(cover.elements[e], item) <= radius) {
                    ++count;
                    break;
                }
            }
        }
        if (count > 0) {
            table.entries.push_back(
                ScoreEntry{std::to_string(e), cover.elements[e], count});
        }
    }
    table.bottom_weight =
        static_cast<double>(cover.elements.size()) - static_cast<double>(table.entries.size());
    return table;
}

ScoreTable score_table(const std::vector<HypothesisList>& lists, const DenseMixtureLattice& cover,
                       double radius) {
    if (cover.log_total_count > 700.0) {
        throw InfeasibleBudget("cover too large for a representable sentinel weight");
    }
    ScoreTable table;
    table.rounds = static_cast<int>(lists.size());
    table.radius = radius;

    std::map<std::string, std::pair<Mixture, int>> scores;
    std::unordered_map<std::string, char> in_this_list;
    for (const auto& list : lists) {
        in_this_list.clear();
        for (const auto& item : list.items) {
            for (auto& [key, hyp] : cover.enumerate_near(item, radius)) {
                if (in_this_list.emplace(key, 1).second) {
                    auto it = scores.find(key);
                    if (it == scores.end()) {
                        scores.emplace(key, std::make_pair(std::move(hyp), 1));
                    } else {
                        it->second.second += 1;
                    }
                }
            }
        }
    }
    table.entries.reserve(scores.size());
    for (auto& [key, val] : scores) {
        table.entries.push_back(ScoreEntry{key, std::move(val.first), val.second});
    }
    table.bottom_weight = cover.total_count() - static_cast<double>(table.entries.size());
    table.bottom_weight = std::max(table.bottom_weight, 0.0);
    return table;
}

SelectResult gap_max(const ScoreTable& table, const PrivacyParams& priv, double alpha_prime,
                     double beta, RngStream& rng) {
    if (!(alpha_prime > 0.0 && alpha_prime < 1.0)) throw InvalidConfig("alpha_prime outside (0,1)");
    if (!(beta > 0.0 && beta < 1.0)) throw InvalidConfig("beta outside (0,1)");
    if (table.entries.empty() && table.bottom_weight <= 0.0) {
        throw EmptyTable("no entries and no sentinel mass");
    }

    // Log weights: ln(multiplicity) + eps * utility / 2, utility shifted by
    // -1 and clipped at 0 so entries appearing or vanishing across
    // neighboring inputs carry the sentinel's utility.
    std::vector<double> logw;
    logw.reserve(table.entries.size() + 1);
    for (const auto& e : table.entries) {
        const double u = std::max(e.count - 1, 0);
        logw.push_back(priv.epsilon * u / 2.0);
    }
    const bool has_bottom = table.bottom_weight > 0.0;
    if (has_bottom) logw.push_back(std::log(table.bottom_weight));

    const double lmax = *std::max_element(logw.begin(), logw.end());
    double z = 0.0;
    for (double lw : logw) z += std::exp(lw - lmax);
    const double u = rng.uniform();
    double acc = 0.0;
    size_t pick = logw.size() - 1;
    for (size_t i = 0; i < logw.size(); ++i) {
        acc += std::exp(logw[i] - lmax) / z;
        if (u < acc) {
            pick = i;
            break;
        }
    }

    SelectResult out;
    if (pick < table.entries.size()) {
        out.is_bottom = false;
        out.key = table.entries[pick].key;
        out.hypothesis = table.entries[pick].hypothesis;
        out.score = table.entries[pick].count;
    }
    return out;
}

SelectResult pcms(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                  const MixtureMetric& metric, MetricTag metric_tag, const PrivacyParams& priv,
                  double beta, RngStream& rng) {
    const ScoreTable table = score_table(lists, cover, 2.0 * cover.alpha, metric, metric_tag);
    return gap_max(table, priv, 0.1, beta, rng);
}

SelectResult pcms(const std::vector<HypothesisList>& lists, const DenseMixtureLattice& cover,
                  const PrivacyParams& priv, double beta, RngStream& rng) {
    const ScoreTable table = score_table(lists, cover, 2.0 * cover.alpha);
    return gap_max(table, priv, 0.1, beta, rng);
}

namespace {

double epsilon_hat_from_counts(const std::map<std::string, std::pair<long, long>>& counts,
                               long runs, double delta) {
    double worst = 0.0;
    for (const auto& [key, c] : counts) {
        const double f1 = static_cast<double>(c.first) / static_cast<double>(runs);
        const double f2 = static_cast<double>(c.second) / static_cast<double>(runs);
        for (int dir = 0; dir < 2; ++dir) {
            const double fa = dir == 0 ? f1 : f2;
            const double fb = dir == 0 ? f2 : f1;
            if (fa - delta <= 0.0) continue;
            if (fb <= 0.0) {
                worst = std::numeric_limits<double>::infinity();
                continue;
            }
            worst = std::max(worst, std::log((fa - delta) / fb));
        }
    }
    return std::max(worst, 0.0);
}

}  // namespace

DpAuditReport empirical_dp_audit(const std::function<std::string(RngStream&)>& mech1,
                                 const std::function<std::string(RngStream&)>& mech2, long runs,
                                 const PrivacyParams& priv, double bootstrap_conf,
                                 long bootstrap_samples, RngStream& rng) {
    if (runs < 1) throw InvalidConfig("audit needs runs >= 1");
    std::vector<std::string> ids;
    std::unordered_map<std::string, int> id_of;
    std::vector<int> out1(static_cast<size_t>(runs)), out2(static_cast<size_t>(runs));
    auto intern = [&](const std::string& key) {
        auto it = id_of.find(key);
        if (it != id_of.end()) return it->second;
        const int id = static_cast<int>(ids.size());
        ids.push_back(key);
        id_of.emplace(key, id);
        return id;
    };
    for (long r = 0; r < runs; ++r) {
        RngStream s1 = rng.split(static_cast<uint64_t>(2 * r));
        RngStream s2 = rng.split(static_cast<uint64_t>(2 * r + 1));
        out1[static_cast<size_t>(r)] = intern(mech1(s1));
        out2[static_cast<size_t>(r)] = intern(mech2(s2));
    }

    auto counts_from = [&](const std::vector<int>& a, const std::vector<int>& b) {
        std::map<std::string, std::pair<long, long>> counts;
        for (int id : a) counts[ids[static_cast<size_t>(id)]].first += 1;
        for (int id : b) counts[ids[static_cast<size_t>(id)]].second += 1;
        return counts;
    };
    const auto base_counts = counts_from(out1, out2);

    DpAuditReport report;
    report.epsilon_config = priv.epsilon;
    report.delta = priv.delta;
    report.runs = runs;
    report.epsilon_hat = epsilon_hat_from_counts(base_counts, runs, priv.delta);

    RngStream boot_rng = rng.split(0xb00757ULL);
    std::vector<double> boots;
    boots.reserve(static_cast<size_t>(bootstrap_samples));
    std::vector<int> r1(static_cast<size_t>(runs)), r2(static_cast<size_t>(runs));
    for (long b = 0; b < bootstrap_samples; ++b) {
        for (long i = 0; i < runs; ++i) {
            r1[static_cast<size_t>(i)] = out1[static_cast<size_t>(boot_rng.uniform_int(runs))];
            r2[static_cast<size_t>(i)] = out2[static_cast<size_t>(boot_rng.uniform_int(runs))];
        }
        boots.push_back(epsilon_hat_from_counts(counts_from(r1, r2), runs, priv.delta));
    }
    std::sort(boots.begin(), boots.end());
    const size_t idx = std::min(boots.size() - 1,
                                static_cast<size_t>(std::floor(bootstrap_conf *
                                                               static_cast<double>(boots.size()))));
    report.epsilon_hat_upper = boots.empty() ? report.epsilon_hat : boots[idx];

    report.outputs = json::array();
    for (const auto& [key, c] : base_counts) {
        report.outputs.push_back(
            json{{"id", key},
                 {"freq1", static_cast<double>(c.first) / static_cast<double>(runs)},
                 {"freq2", static_cast<double>(c.second) / static_cast<double>(runs)}});
    }
    return report;
}

json dp_audit_to_json(const DpAuditReport& report) {
    return json{{"epsilon_hat", report.epsilon_hat},
                {"epsilon_hat_upper", report.epsilon_hat_upper},
                {"epsilon_config", report.epsilon_config},
                {"delta", report.delta},
                {"runs", report.runs},
                {"outputs", report.outputs}};
}

}  // namespace dpmix
