#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dpmix/metrics.hpp"
#include "dpmix/model.hpp"

namespace dpmix {

enum class MetricTag { tv, kappa_mix, linf };

std::string metric_tag_name(MetricTag tag);
MetricTag metric_tag_from_name(const std::string& name);

struct CoverAudit {
    long max_ball_count = 0;
    long probes = 0;
    std::vector<std::pair<long, long>> violations;  // (probe index, ball count)
};

/// Finite hypothesis set with covering radius, metric tag, and a
/// deterministic data-independent construction recipe.
template <class H>
struct Cover {
    std::vector<H> elements;
    double alpha = 0.0;
    MetricTag metric = MetricTag::tv;
    json recipe;
    std::optional<double> claimed_t;
    std::optional<double> claimed_gamma;
    uint64_t built_tick = 0;
};

using SimplexCover = Cover<Eigen::VectorXd>;
using GaussianCover = Cover<Gaussian>;
using MixtureCover = Cover<Mixture>;

/// Cube partition of [0,1]^k at side `alpha`; one representative per cube
/// that meets the probability simplex. Representatives are found by
/// water-filling from the cube's lower corner.
struct SimplexGrid {
    int k = 1;
    double alpha = 1.0;
    long per_axis = 1;

    std::optional<Eigen::VectorXd> representative(const std::vector<long>& idx) const;
    void for_each(const std::function<void(const Eigen::VectorXd&)>& fn) const;
    /// Representatives within l-inf `radius` of w (value-deduplicated).
    std::vector<Eigen::VectorXd> near(const Eigen::VectorXd& w, double radius) const;
};

SimplexGrid simplex_grid(int k, double alpha);
SimplexCover simplex_cover(int k, double alpha);

struct BallCoverOptions {
    double sub_pitch_factor = 1.0;  // scales the TV pitch of the sub-grids
    size_t element_cap = 5'000'000;
    bool trim_to_ball = true;  // d=1: drop elements with exact TV > gamma+alpha
};

/// Constructive TV alpha-cover of the TV ball of radius gamma around
/// N(mu, sigma): a whitened location lattice crossed with a symmetric
/// covariance-perturbation lattice, mapped back with the center's affine
/// transform. Requires 0 < alpha < gamma <= 1/600.
GaussianCover gaussian_ball_cover(const Gaussian& center, double alpha, double gamma,
                                  const BallCoverOptions& opts = {});

struct GaussianBox {
    int dim = 1;
    double mean_bound = 1.0;  // coordinates in [-mean_bound, mean_bound]
    double eig_min = 0.5;
    double eig_max = 2.0;
};

struct BoundedCoverOptions {
    size_t element_cap = 5'000'000;
    BallCoverOptions ball;  // used when alpha is small enough to tile
};

/// Data-independent alpha-cover of all Gaussians inside the box. For
/// alpha >= 1/600 this is a direct parameter lattice; for smaller alpha the
/// lattice cells are refined with gaussian_ball_cover tiles. claimed_t is
/// measured by a dense deterministic audit at claimed_gamma = 2*alpha.
GaussianCover bounded_gaussian_cover(const GaussianBox& box, double alpha,
                                     const BoundedCoverOptions& opts = {});

/// Mixture cover from a component cover: union over s in [k] of component
/// s-tuples crossed with simplex_cover(s, alpha/s). Ordered duplicates are
/// permitted; the element count matches the product formula.
MixtureCover dense_mixture_cover(const GaussianCover& component_cover, int k, double alpha,
                                 size_t element_cap = 5'000'000);

template <class H, class M>
CoverAudit audit_local_smallness(const Cover<H>& cover, double gamma,
                                 const std::vector<H>& probes, M&& metric) {
    CoverAudit audit;
    audit.probes = static_cast<long>(probes.size());
    for (size_t p = 0; p < probes.size(); ++p) {
        long count = 0;
        for (const auto& e : cover.elements) {
            if (metric(probes[p], e) <= gamma) ++count;
        }
        audit.max_ball_count = std::max(audit.max_ball_count, count);
        if (cover.claimed_t && static_cast<double>(count) > *cover.claimed_t) {
            audit.violations.emplace_back(static_cast<long>(p), count);
        }
    }
    return audit;
}

/// d=1 mean x variance product lattice over a box; the pipeline-scale cover
/// is queried through this view without materializing elements.
struct GaussianLattice {
    GaussianBox box;
    double alpha = 0.0;
    double mean_lo = 0.0, mean_pitch = 1.0;
    long mean_count = 0;
    double var_lo = 0.0, var_pitch = 1.0;
    long var_count = 0;
    json recipe;
    std::optional<double> claimed_t;
    double claimed_gamma = 0.0;
    uint64_t built_tick = 0;

    double total_count() const {
        return static_cast<double>(mean_count) * static_cast<double>(var_count);
    }
    Gaussian element(long mean_idx, long var_idx) const;
    /// Exact TV ball scan (monotone row/column cutoffs keep it local).
    void for_each_near(const Gaussian& y, double radius,
                       const std::function<void(long, long)>& fn) const;
    std::vector<Gaussian> materialize(size_t cap) const;
};

GaussianLattice gaussian_box_lattice(const GaussianBox& box, double alpha);

/// Implicit dense-mixture cover over a component lattice. Used by the
/// private selector at pipeline scale: only elements near a query are ever
/// constructed.
struct DenseMixtureLattice {
    GaussianLattice component;
    int k = 1;
    double alpha = 0.0;
    std::vector<SimplexGrid> weight_grids;  // index s-1 -> grid for s parts
    json recipe;
    double log_total_count = 0.0;
    uint64_t built_tick = 0;

    double total_count() const;  // +inf if not representable
    /// Canonically keyed elements within kappa_mix `radius` of y.
    std::vector<std::pair<std::string, Mixture>> enumerate_near(const Mixture& y,
                                                                double radius) const;
};

DenseMixtureLattice dense_mixture_lattice(const GaussianLattice& component, int k, double alpha);

json cover_to_json(const SimplexCover& c, bool include_elements = true);
json cover_to_json(const GaussianCover& c, bool include_elements = true);
json cover_to_json(const MixtureCover& c, bool include_elements = true);

/// Rebuilds a cover from its recipe ("simplex", "gaussian_ball",
/// "gaussian_box", "dense_mixture").
SimplexCover replay_simplex_cover(const json& recipe);
GaussianCover replay_gaussian_cover(const json& recipe);
MixtureCover replay_mixture_cover(const json& recipe);

/// Data-independent probe draw for audits: means uniform in the box,
/// covariances from uniform eigenvalues and a random rotation.
std::vector<Gaussian> sample_box_gaussians(const GaussianBox& box, size_t n, RngStream& rng);

}  // namespace dpmix
