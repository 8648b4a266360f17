#pragma once

#include <vector>

#include "dpmix/covers.hpp"
#include "dpmix/model.hpp"

namespace dpmix {

struct DecodeParams {
    long m = 20;           // decode sample size
    long L_budget = 100000;
    double alpha = 0.1;
    double beta = 0.1;
    double gamma = 0.0;    // contamination level
    int subset_size = 0;   // 0 -> d + 2
    int grid_bits = 1;
};

/// Engine knobs outside the decoding contract.
struct DecodeOptions {
    long exhaustive_threshold = 100000;
    double thin_separation = 0.0;  // TV separation when over budget; 0 -> alpha/4
    double grid_mean_range = 1.0;  // +- range of mean offsets in fitted sigmas
    double grid_scale_range = 1.3862943611198906;  // ln 4: covariance scaling range
    long component_budget = 48;    // per-component list cap inside mixture decoding
    long rank_pool = 2048;         // thinned pool size before likelihood ranking
    double rank_trim = 0.4;        // fraction of points kept in the trimmed score
};

struct HypothesisList {
    std::vector<Mixture> items;
    int source_chunk = -1;
    long budget = 0;
    json manifest;
};

/// Samples needed to see m inliers at contamination gamma:
/// ceil((2m + 8 ln(1/beta)) / (1 - gamma)).
long contamination_sample_count(const DecodeParams& p);

/// Subset-fit decoder: every size-(subset_size) subset of a size-m subsample
/// is fit by its empirical mean and regularized covariance, then refined on a
/// nested dyadic grid of mean offsets and covariance scalings (grid_bits
/// levels). Exhaustive over subsets when feasible, seeded random otherwise.
HypothesisList gaussian_list_decode(const Dataset& data, const DecodeParams& p, RngStream& rng,
                                    const DecodeOptions& opts = {});

/// Robustness lift: unions the base decoder over size-m subsets of the first
/// N points, N from contamination_sample_count. Random mode draws enough
/// subsets for an all-inlier hit with probability >= 1 - beta under the
/// binomial inlier-count bound.
HypothesisList lift_contamination(const Dataset& data, const DecodeParams& p, RngStream& rng,
                                  const DecodeOptions& opts = {});

/// Dense-mixture decoder: runs the lifted component decoder with every other
/// component treated as contamination, then crosses the component list with
/// simplex weight covers for every s in [k].
HypothesisList dense_mixture_list_decode(const Dataset& data, int k, const DecodeParams& p,
                                         RngStream& rng, const DecodeOptions& opts = {});

json hypothesis_list_to_json(const HypothesisList& list);
HypothesisList hypothesis_list_from_json(const json& j);

}  // namespace dpmix
