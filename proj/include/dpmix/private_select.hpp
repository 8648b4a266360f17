#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>

#include "dpmix/covers.hpp"
#include "dpmix/listdecode.hpp"

namespace dpmix {

struct PrivacyParams {
    double epsilon = 1.0;
    double delta = 1e-6;
};

struct ScoreEntry {
    std::string key;
    Mixture hypothesis;
    int count = 0;
};

/// Scores of the cover elements near at least one list item; every other
/// cover element sits in the bottom sentinel with zero utility.
struct ScoreTable {
    std::vector<ScoreEntry> entries;
    int rounds = 0;  // T = number of lists scored
    double radius = 0.0;
    double bottom_weight = 0.0;
};

struct SelectResult {
    bool is_bottom = true;
    std::string key = "BOTTOM";
    std::optional<Mixture> hypothesis;
    int score = 0;
};

/// ceil(c * (ln(1/delta) + ln(t Q / beta)) / epsilon).
long required_rounds(double t, double q, double beta, const PrivacyParams& priv, double c);

/// score(h) = number of lists containing an item within `radius` of h.
ScoreTable score_table(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                       double radius, const MixtureMetric& metric, MetricTag metric_tag);

/// Same score over an implicit lattice cover; only elements near some list
/// item are ever constructed.
ScoreTable score_table(const std::vector<HypothesisList>& lists, const DenseMixtureLattice& cover,
                       double radius);

/// Exponential-mechanism selection over the active entries plus the bottom
/// sentinel: utility max(score - 1, 0), sentinel utility 0 with multiplicity
/// bottom_weight, probability proportional to multiplicity * exp(eps u / 2).
/// Sampled by inverse CDF; residual ties break to the lowest index.
SelectResult gap_max(const ScoreTable& table, const PrivacyParams& priv, double alpha_prime,
                     double beta, RngStream& rng);

SelectResult pcms(const std::vector<HypothesisList>& lists, const MixtureCover& cover,
                  const MixtureMetric& metric, MetricTag metric_tag, const PrivacyParams& priv,
                  double beta, RngStream& rng);
SelectResult pcms(const std::vector<HypothesisList>& lists, const DenseMixtureLattice& cover,
                  const PrivacyParams& priv, double beta, RngStream& rng);

struct DpAuditReport {
    double epsilon_hat = 0.0;
    double epsilon_hat_upper = 0.0;  // bootstrap upper quantile
    double epsilon_config = 0.0;
    double delta = 0.0;
    long runs = 0;
    json outputs;  // [{id, freq1, freq2}]
};

/// Runs both mechanisms `runs` times each and estimates the worst observed
/// privacy loss: max over outputs and directions of ln((freq_a - delta) /
/// freq_b), clipped at 0, with a bootstrap upper quantile.
DpAuditReport empirical_dp_audit(const std::function<std::string(RngStream&)>& mech1,
                                 const std::function<std::string(RngStream&)>& mech2, long runs,
                                 const PrivacyParams& priv, double bootstrap_conf,
                                 long bootstrap_samples, RngStream& rng);

json dp_audit_to_json(const DpAuditReport& report);

}  // namespace dpmix
