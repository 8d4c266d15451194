#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <variant>
#include <vector>

#include "adaptrate/chain_models.hpp"

namespace adaptrate {

using CovarianceMatrix = Eigen::MatrixXd;

/// One axis of a tensor-product rate grid with trapezoidal weights.
struct GridAxis {
  std::vector<double> nodes;
  std::vector<double> weights;
};

/// Tensor-product grid over [0, h_max]^d. Flat indices are row-major: the
/// last dimension varies fastest, so flat order is lexicographic in the node
/// coordinates.
class RateGrid {
 public:
  static RateGrid uniform(std::size_t dims, double h_max, std::size_t nodes_per_dim);
  /// Arbitrary strictly increasing node arrays, one per dimension.
  explicit RateGrid(std::vector<std::vector<double>> axes);

  std::size_t dims() const noexcept { return axes_.size(); }
  std::size_t size() const noexcept { return size_; }
  const GridAxis& axis(std::size_t d) const { return axes_.at(d); }
  std::vector<std::size_t> shape() const;

  bool operator==(const RateGrid& other) const;

 private:
  std::vector<GridAxis> axes_;
  std::size_t size_ = 0;
};

struct GridSpec {
  double h_max = 10.0;
  std::size_t nodes = 201;
};

struct GammaPrior {
  double alpha = 2.0;
  double beta = 1.0;
};

/// Bivariate gamma with a Whittaker-function density (shapes a, b; scales mu1, mu2).
struct BivariateGammaPrior {
  double a = 1.0;
  double b = 1.0;
  double mu1 = 2.0;
  double mu2 = 2.0;
};

/// Bivariate gamma restricted to rate[0] < rate[1] (birth < death).
struct TruncatedBivariateGammaPrior {
  double a = 1.0;
  double b = 1.0;
  double mu1 = 2.0;
  double mu2 = 2.0;
};

/// Each of the m(m-1) rates independently 1 with probability p, else 0.
struct BernoulliStructurePrior {
  double p = 0.5;
  std::size_t m = 3;
};

using PriorSpec = std::variant<GammaPrior, BivariateGammaPrior, TruncatedBivariateGammaPrior, BernoulliStructurePrior>;

std::size_t prior_dimension(const PriorSpec& spec);
void validate_prior(const PriorSpec& spec);
/// Throws DimensionMismatch / InvalidArgument if the prior cannot be used with the model.
void validate_prior_for_model(const PriorSpec& spec, const ChainModel& model);

enum class SupportKind { Grid, Configurations };

/// Discrete support shared by all posteriors of one run: the grid nodes (or
/// binary configurations) as points in rate space plus quadrature weights.
class Support {
 public:
  explicit Support(RateGrid grid);
  static std::shared_ptr<const Support> configurations(std::size_t rate_dim);

  SupportKind kind() const noexcept { return kind_; }
  std::size_t dims() const noexcept { return dims_; }
  std::size_t size() const noexcept { return weights_.size(); }
  std::span<const double> point(std::size_t i) const { return {points_.data() + i * dims_, dims_}; }
  double weight(std::size_t i) const { return weights_[i]; }
  const RateGrid& grid() const;

 private:
  Support() = default;

  SupportKind kind_ = SupportKind::Grid;
  std::size_t dims_ = 0;
  std::vector<double> points_;
  std::vector<double> weights_;
  std::unique_ptr<RateGrid> grid_;
};

/// Normalized density over a support. Densities are per unit rate volume for
/// grids and plain probabilities for configurations, so that the
/// quadrature mass of node i is density(i) * weight(i).
class Posterior {
 public:
  Posterior(std::shared_ptr<const Support> support, std::vector<double> density);

  static Posterior on_grid(RateGrid grid, std::vector<double> density);
  static Posterior over_configurations(std::size_t rate_dim, std::vector<double> probabilities);
  /// Adopts an already normalized density bit for bit (snapshot restore).
  /// Throws if its total mass is off by more than 1e-9.
  static Posterior from_normalized(std::shared_ptr<const Support> support, std::vector<double> density);

  SupportKind kind() const noexcept { return support_->kind(); }
  std::size_t dims() const noexcept { return support_->dims(); }
  std::size_t size() const noexcept { return density_.size(); }
  const Support& support() const noexcept { return *support_; }
  const std::shared_ptr<const Support>& support_ptr() const noexcept { return support_; }
  std::span<const double> density() const noexcept { return density_; }
  double density(std::size_t i) const { return density_[i]; }
  double mass(std::size_t i) const { return density_[i] * support_->weight(i); }
  double total_mass() const;

  /// Same support, new (normalized) density.
  Posterior with_density(std::vector<double> density) const;

 private:
  Posterior() = default;

  std::shared_ptr<const Support> support_;
  std::vector<double> density_;
};

Posterior prior_density(const PriorSpec& spec, const RateGrid& grid);
Posterior prior_density(const BernoulliStructurePrior& spec);
/// Prior for any variant: continuous variants on a uniform grid built from
/// `grid`, the structure prior over configurations.
Posterior initial_posterior(const PriorSpec& spec, const GridSpec& grid);

/// Multiply by p(x_obs | x_prev, h, dt) and renormalize.
Posterior bayes_update(const Posterior& post, const ChainModel& model, State x_prev, double dt, State x_obs);
/// Same update with dt derived from the protocol: obs.t under
/// ResetEachSample, obs.t - prev.t along a trajectory.
Posterior bayes_update(const Posterior& post, const ChainModel& model, const Observation& prev,
                       const Observation& obs);

RateVector posterior_mean(const Posterior& post);
CovarianceMatrix posterior_covariance(const Posterior& post);
/// Variance for d = 1, determinant of the covariance otherwise.
double posterior_spread(const Posterior& post);

/// Posterior mean squared error of one rate about its true value.
double mse(const Posterior& post, const RateVector& h_true, std::size_t component);
/// Normalized L1 error of a MAP estimate over d_max rates.
double mae(const RateVector& h_map, const RateVector& h_true, std::size_t d_max);
/// Node of maximal density; ties go to the lowest flat index.
RateVector map_estimate(const Posterior& post);
std::size_t map_index(const Posterior& post);

/// Marginal density along one grid axis (grid posteriors only).
std::vector<double> marginal_density(const Posterior& post, std::size_t dim);

/// Draw a rate vector from a posterior: a node by mass, then (if `jitter`)
/// a uniform offset within that node's trapezoid cell. Configurations are
/// returned as-is.
RateVector sample_rates(const Posterior& post, Rng& rng, bool jitter = true);

}  // namespace adaptrate
