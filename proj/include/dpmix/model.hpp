#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "dpmix/errors.hpp"
#include "dpmix/rng.hpp"
#include "nlohmann/json.hpp"

namespace dpmix {

using json = nlohmann::json;

/// Multivariate normal with a cached lower-triangular Cholesky factor.
/// Immutable after construction; construction rejects asymmetric or
/// non-positive-definite covariance.
class Gaussian {
  public:
    Gaussian(Eigen::VectorXd mean, Eigen::MatrixXd cov);

    int dim() const { return static_cast<int>(mean_.size()); }
    const Eigen::VectorXd& mean() const { return mean_; }
    const Eigen::MatrixXd& cov() const { return cov_; }
    const Eigen::MatrixXd& chol() const { return chol_; }

    double log_density(const Eigen::VectorXd& x) const;
    Eigen::VectorXd sample(RngStream& rng) const;

    /// Solves L y = v with the cached factor (v in the ambient space).
    Eigen::VectorXd whiten(const Eigen::VectorXd& v) const;

  private:
    Eigen::VectorXd mean_;
    Eigen::MatrixXd cov_;
    Eigen::MatrixXd chol_;
    double log_norm_;  // -d/2 ln(2 pi) - sum ln L_ii
};

/// Convex combination of Gaussians; also the hypothesis representation.
/// A single Gaussian is the one-component case.
class Mixture {
  public:
    Mixture(Eigen::VectorXd weights, std::vector<Gaussian> components);
    static Mixture single(Gaussian g);

    int size() const { return static_cast<int>(components_.size()); }
    int dim() const { return components_.front().dim(); }
    const Eigen::VectorXd& weights() const { return weights_; }
    const std::vector<Gaussian>& components() const { return components_; }
    const Gaussian& component(int i) const { return components_[static_cast<size_t>(i)]; }

    double log_density(const Eigen::VectorXd& x) const;
    double density(const Eigen::VectorXd& x) const { return std::exp(log_density(x)); }
    Eigen::VectorXd sample(RngStream& rng) const;

  private:
    Eigen::VectorXd weights_;
    std::vector<Gaussian> components_;
};

struct DenseDecomposition {
    double gamma = 0.0;
    Mixture dense_part;
    std::optional<Mixture> residual;
};

/// Sample points plus the seed they were generated from. `created_tick`
/// orders data access against cover construction (see covers.hpp).
struct Dataset {
    std::vector<Eigen::VectorXd> points;
    uint64_t seed = 0;
    uint64_t created_tick = 0;

    size_t size() const { return points.size(); }
    int dim() const { return points.empty() ? 0 : static_cast<int>(points.front().size()); }
};

/// Process-wide monotonic counter used for cover/data provenance ordering.
uint64_t provenance_tick();

Gaussian gaussian_create(const Eigen::VectorXd& mean, const Eigen::MatrixXd& cov);

Dataset sample(const Gaussian& g, size_t n, RngStream& rng);
Dataset sample(const Mixture& m, size_t n, RngStream& rng);

/// x -> A x + b applied to the distribution; A must be invertible.
Gaussian affine_transform(const Gaussian& g, const Eigen::MatrixXd& a,
                          const Eigen::VectorXd& b);

/// Splits off components with weight below alpha/k and renormalizes the rest.
DenseDecomposition dense_decompose(const Mixture& m, int k, double alpha);

/// max{ ||S1^{-1/2} S2 S1^{-1/2} - I||_F , ||S1^{-1/2}(mu1-mu2)||_2 };
/// asymmetric in its arguments by construction.
double gaussian_delta(const Gaussian& g1, const Gaussian& g2);

json to_json(const Gaussian& g);
json to_json(const Mixture& m);
Mixture mixture_from_json(const json& j);

/// Canonical serialization: components sorted with their weights so two
/// representations of the same mixture compare equal.
std::string canonical_key(const Mixture& m);

}  // namespace dpmix
