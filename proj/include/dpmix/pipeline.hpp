#pragma once

#include <map>

#include "dpmix/covers.hpp"
#include "dpmix/listdecode.hpp"
#include "dpmix/mde.hpp"
#include "dpmix/private_select.hpp"

namespace dpmix {

enum class PipelineMode { theory, practical };

/// Every derived quantity of the end-to-end learner. Counts that are
/// typically astronomical are carried in log space; `executable` reports
/// whether the theory-mode sizes could actually run.
struct PipelineParams {
    double alpha = 0.1;
    double beta = 0.1;
    PrivacyParams priv;
    int k = 1;
    int d = 1;
    PipelineMode mode = PipelineMode::practical;

    double alpha_prime = 0.0;  // alpha / 15
    double beta_prime = 0.0;   // fixed point of the failure-probability substitution
    double m1 = 0.0;
    double log_L1 = 0.0;
    double m2 = 0.0;
    double log_L2 = 0.0;
    double m3 = 0.0;
    double log_t1 = 0.0;
    double rounds = 0.0;  // T before rounding
    bool executable = false;

    std::map<std::string, double> constants;

    // Practical-mode run sizes (user overrides, recorded as such).
    long T_run = 0;
    long m2_run = 0;
    long m3_run = 0;
    DecodeParams decode;
    DecodeOptions decode_opts;
    long mde_mc_n = 2000;
    long filter_mc_n = 2000;
    double filter_conf = 0.95;
    long survivor_cap = 32;
    json overrides;
};

/// alpha' = alpha/15 and the full formula chain (m1, L1, m2, L2, t1, T, m3),
/// with beta' solved by fixed-point iteration since it appears inside L2.
PipelineParams derive_parameters(double alpha, double beta, const PrivacyParams& priv, int k,
                                 int d, double cover_t, const DecodeParams& decode,
                                 const std::map<std::string, double>& constants = {});

json pipeline_params_to_json(const PipelineParams& p);

// Failure-probability substitution helpers.
double claim_beta_prime(double c1, double c2, double beta);  // beta / (2e c1 ln(e c1 c2 / beta))
double claim_check_value(double c1, double c2, double beta);  // c1 b' ln(c2 / b')
double claim_inequality_f(double x);                          // 1 + ln2/x + lnx/x

struct ChunkReport {
    int chunk = 0;
    long list_size = 0;
    long survivors = 0;
    int mde_index = -1;
    json tv_estimates;  // per-item filter estimates
};

struct LearnResult {
    SelectResult selected;
    std::vector<HypothesisList> filtered_lists;
    std::vector<ChunkReport> chunk_reports;
    json manifest;
};

/// Non-private phases: disjoint chunks, per-chunk decoding, MDE choice, and
/// the TV filter at 11 alpha'/2. Exposed separately so neighboring-run
/// locality can be checked without touching the private selection.
std::vector<HypothesisList> pipeline_filtered_lists(const Dataset& data,
                                                    const PipelineParams& params, uint64_t seed,
                                                    std::vector<ChunkReport>* reports = nullptr);

LearnResult learn_gmm_dp(const Dataset& data, const PipelineParams& params,
                         const DenseMixtureLattice& cover, RngStream& rng);
LearnResult learn_gmm_dp(const Dataset& data, const PipelineParams& params,
                         const MixtureCover& cover, const MixtureMetric& metric, RngStream& rng);

}  // namespace dpmix
