#include "adaptrate/bayes.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "adaptrate/error.hpp"
#include "adaptrate/special_functions.hpp"

namespace adaptrate {

namespace {

GridAxis make_axis(std::vector<double> nodes) {
  require(!nodes.empty(), ErrorCode::InvalidArgument, "grid axis needs at least one node");
  require(nodes.front() >= 0.0, ErrorCode::InvalidArgument, "grid nodes must be >= 0");
  for (std::size_t i = 1; i < nodes.size(); ++i) {
    require(nodes[i] > nodes[i - 1], ErrorCode::InvalidArgument, "grid nodes must be strictly increasing");
  }
  GridAxis axis;
  axis.weights.assign(nodes.size(), 0.0);
  if (nodes.size() == 1) {
    axis.weights[0] = 1.0;
  } else {
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
      const double half = 0.5 * (nodes[i + 1] - nodes[i]);
      axis.weights[i] += half;
      axis.weights[i + 1] += half;
    }
  }
  axis.nodes = std::move(nodes);
  return axis;
}

// Evaluation point for a node where the density may be singular at 0.
double interior(double h, const GridAxis& axis, bool singular_at_zero) {
  if (h > 0.0 || !singular_at_zero || axis.nodes.size() < 2) return h;
  return 0.5 * axis.nodes[1];
}

double log_bivariate_gamma(double h0, double h1, double a, double b, double mu1, double mu2,
                           std::unordered_map<double, double>& whittaker_cache) {
  if (h0 <= 0.0 || h1 <= 0.0) return -INFINITY;
  const double c = a + b;
  const double s = h0 / mu1 + h1 / mu2;
  auto it = whittaker_cache.find(s);
  if (it == whittaker_cache.end()) {
    const double w = whittaker_w(c - b + 0.5 * (1.0 - a), c - 0.5 * a, s);
    it = whittaker_cache.emplace(s, std::log(w)).first;
  }
  const double log_c = -(c * std::log(mu1 * mu2) + std::lgamma(c) + std::lgamma(a) + std::lgamma(b));
  return log_c + std::lgamma(b) + (c - 1.0) * std::log(h0 * h1) + (0.5 * (a - 1.0) - c) * std::log(s) - 0.5 * s +
         it->second;
}

std::vector<double> normalized(std::vector<double> density, const Support& support) {
  double total = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    require(std::isfinite(density[i]) && density[i] >= 0.0, ErrorCode::NonFinite,
            "posterior density must be finite and >= 0");
    total += density[i] * support.weight(i);
  }
  require(total > 0.0 && std::isfinite(total), ErrorCode::ImpossibleObservation, "posterior has zero mass");
  for (double& v : density) v /= total;
  return density;
}

}  // namespace

RateGrid RateGrid::uniform(std::size_t dims, double h_max, std::size_t nodes_per_dim) {
  require(dims >= 1, ErrorCode::InvalidArgument, "grid needs at least one dimension");
  require(h_max > 0.0 && std::isfinite(h_max), ErrorCode::InvalidArgument, "grid h_max must be > 0");
  require(nodes_per_dim >= 2, ErrorCode::InvalidArgument, "grid needs at least two nodes per dimension");
  std::vector<double> nodes(nodes_per_dim);
  for (std::size_t i = 0; i < nodes_per_dim; ++i) {
    nodes[i] = h_max * static_cast<double>(i) / static_cast<double>(nodes_per_dim - 1);
  }
  return RateGrid(std::vector<std::vector<double>>(dims, nodes));
}

RateGrid::RateGrid(std::vector<std::vector<double>> axes) {
  require(!axes.empty(), ErrorCode::InvalidArgument, "grid needs at least one dimension");
  size_ = 1;
  for (auto& nodes : axes) {
    axes_.push_back(make_axis(std::move(nodes)));
    size_ *= axes_.back().nodes.size();
  }
}

std::vector<std::size_t> RateGrid::shape() const {
  std::vector<std::size_t> out;
  for (const auto& a : axes_) out.push_back(a.nodes.size());
  return out;
}

bool RateGrid::operator==(const RateGrid& other) const {
  if (axes_.size() != other.axes_.size()) return false;
  for (std::size_t d = 0; d < axes_.size(); ++d) {
    if (axes_[d].nodes != other.axes_[d].nodes) return false;
  }
  return true;
}

Support::Support(RateGrid grid) : kind_(SupportKind::Grid), dims_(grid.dims()) {
  const std::size_t n = grid.size();
  const auto shape = grid.shape();
  points_.resize(n * dims_);
  weights_.resize(n);
  std::vector<std::size_t> idx(dims_, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    double w = 1.0;
    for (std::size_t d = 0; d < dims_; ++d) {
      points_[flat * dims_ + d] = grid.axis(d).nodes[idx[d]];
      w *= grid.axis(d).weights[idx[d]];
    }
    weights_[flat] = w;
    for (std::size_t d = dims_; d-- > 0;) {
      if (++idx[d] < shape[d]) break;
      idx[d] = 0;
    }
  }
  grid_ = std::make_unique<RateGrid>(std::move(grid));
}

std::shared_ptr<const Support> Support::configurations(std::size_t rate_dim) {
  require(rate_dim >= 1 && rate_dim <= 16, ErrorCode::InvalidArgument,
          "configuration support limited to 16 binary rates");
  std::shared_ptr<Support> s(new Support());
  s->kind_ = SupportKind::Configurations;
  s->dims_ = rate_dim;
  const std::size_t n = std::size_t{1} << rate_dim;
  s->points_.resize(n * rate_dim);
  s->weights_.assign(n, 1.0);
  for (std::size_t c = 0; c < n; ++c) {
    for (std::size_t k = 0; k < rate_dim; ++k) s->points_[c * rate_dim + k] = static_cast<double>((c >> k) & 1U);
  }
  return s;
}

const RateGrid& Support::grid() const {
  require(grid_ != nullptr, ErrorCode::InvalidState, "configuration posterior has no rate grid");
  return *grid_;
}

Posterior::Posterior(std::shared_ptr<const Support> support, std::vector<double> density)
    : support_(std::move(support)) {
  require(support_ != nullptr, ErrorCode::InvalidArgument, "posterior needs a support");
  require(density.size() == support_->size(), ErrorCode::DimensionMismatch, "density size does not match support");
  density_ = normalized(std::move(density), *support_);
}

Posterior Posterior::on_grid(RateGrid grid, std::vector<double> density) {
  return Posterior(std::make_shared<const Support>(std::move(grid)), std::move(density));
}

Posterior Posterior::over_configurations(std::size_t rate_dim, std::vector<double> probabilities) {
  return Posterior(Support::configurations(rate_dim), std::move(probabilities));
}

Posterior Posterior::from_normalized(std::shared_ptr<const Support> support, std::vector<double> density) {
  require(support != nullptr, ErrorCode::InvalidArgument, "posterior needs a support");
  require(density.size() == support->size(), ErrorCode::DimensionMismatch, "density size does not match support");
  Posterior out;
  out.support_ = std::move(support);
  out.density_ = std::move(density);
  for (double v : out.density_) {
    require(std::isfinite(v) && v >= 0.0, ErrorCode::NonFinite, "posterior density must be finite and >= 0");
  }
  require(std::abs(out.total_mass() - 1.0) <= 1e-9, ErrorCode::InvalidArgument, "stored posterior is not normalized");
  return out;
}

double Posterior::total_mass() const {
  double total = 0.0;
  for (std::size_t i = 0; i < density_.size(); ++i) total += mass(i);
  return total;
}

Posterior Posterior::with_density(std::vector<double> density) const { return Posterior(support_, std::move(density)); }

std::size_t prior_dimension(const PriorSpec& spec) {
  return std::visit(
      [](const auto& p) -> std::size_t {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GammaPrior>) return 1;
        else if constexpr (std::is_same_v<T, BernoulliStructurePrior>) return p.m * (p.m - 1);
        else return 2;
      },
      spec);
}

void validate_prior(const PriorSpec& spec) {
  std::visit(
      [](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, GammaPrior>) {
          require(p.alpha > 0.0 && p.beta > 0.0, ErrorCode::InvalidArgument, "gamma prior needs alpha, beta > 0");
        } else if constexpr (std::is_same_v<T, BernoulliStructurePrior>) {
          require(p.p >= 0.0 && p.p <= 1.0, ErrorCode::InvalidArgument, "bernoulli prior needs 0 <= p <= 1");
          require(p.m >= 2 && p.m <= kMaxBinaryStates, ErrorCode::InvalidArgument,
                  "bernoulli prior needs 2 <= m <= " + std::to_string(kMaxBinaryStates));
        } else {
          require(p.a > 0.0 && p.b > 0.0 && p.mu1 > 0.0 && p.mu2 > 0.0, ErrorCode::InvalidArgument,
                  "bivariate gamma prior needs a, b, mu1, mu2 > 0");
        }
      },
      spec);
}

void validate_prior_for_model(const PriorSpec& spec, const ChainModel& model) {
  validate_prior(spec);
  require(prior_dimension(spec) == model.rate_dim(), ErrorCode::DimensionMismatch,
          model.name() + " has " + std::to_string(model.rate_dim()) + " rates but the prior has dimension " +
              std::to_string(prior_dimension(spec)));
  const bool structure = std::holds_alternative<BernoulliStructurePrior>(spec);
  require(structure == (model.kind() == ChainKind::BinaryDigraph), ErrorCode::InvalidArgument,
          "the bernoulli structure prior pairs only with binary_digraph models");
  if (model.kind() == ChainKind::MM1Queue) {
    require(std::holds_alternative<TruncatedBivariateGammaPrior>(spec), ErrorCode::InvalidArgument,
            "mm1_queue requires the truncated bivariate gamma prior (lambda < mu)");
  }
  if (structure) {
    require(std::get<BernoulliStructurePrior>(spec).m == model.num_states(), ErrorCode::DimensionMismatch,
            "bernoulli prior m does not match the model");
  }
}

Posterior prior_density(const PriorSpec& spec, const RateGrid& grid) {
  validate_prior(spec);
  require(!std::holds_alternative<BernoulliStructurePrior>(spec), ErrorCode::InvalidArgument,
          "structure priors live on configurations, not grids");
  require(grid.dims() == prior_dimension(spec), ErrorCode::DimensionMismatch, "grid dimension does not match prior");

  auto support = std::make_shared<const Support>(grid);
  std::vector<double> density(support->size(), 0.0);

  if (const auto* g = std::get_if<GammaPrior>(&spec)) {
    const double log_norm = g->alpha * std::log(g->beta) - std::lgamma(g->alpha);
    for (std::size_t i = 0; i < density.size(); ++i) {
      const double h = interior(support->point(i)[0], grid.axis(0), g->alpha < 1.0);
      density[i] = h > 0.0 ? std::exp(log_norm + (g->alpha - 1.0) * std::log(h) - g->beta * h)
                           : (g->alpha == 1.0 ? std::exp(log_norm) : 0.0);
    }
  } else {
    double a = 0, b = 0, mu1 = 0, mu2 = 0;
    bool truncated = false;
    if (const auto* p = std::get_if<BivariateGammaPrior>(&spec)) {
      a = p->a, b = p->b, mu1 = p->mu1, mu2 = p->mu2;
    } else {
      const auto& t = std::get<TruncatedBivariateGammaPrior>(spec);
      a = t.a, b = t.b, mu1 = t.mu1, mu2 = t.mu2;
      truncated = true;
    }
    const bool singular = a + b <= 1.0;
    std::unordered_map<double, double> cache;
    for (std::size_t i = 0; i < density.size(); ++i) {
      const auto pt = support->point(i);
      if (truncated && pt[0] >= pt[1]) continue;
      const double h0 = interior(pt[0], grid.axis(0), singular);
      const double h1 = interior(pt[1], grid.axis(1), singular);
      density[i] = std::exp(log_bivariate_gamma(h0, h1, a, b, mu1, mu2, cache));
    }
  }

  double mass = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) mass += density[i] * support->weight(i);
  require(mass >= 1e-6, ErrorCode::InvalidArgument, "prior has almost no mass on the grid; enlarge h_max");
  return Posterior(std::move(support), std::move(density));
}

Posterior prior_density(const BernoulliStructurePrior& spec) {
  validate_prior(spec);
  const std::size_t d = spec.m * (spec.m - 1);
  auto support = Support::configurations(d);
  std::vector<double> prob(support->size());
  for (std::size_t c = 0; c < prob.size(); ++c) {
    const auto ones = static_cast<double>(std::popcount(c));
    prob[c] = std::pow(spec.p, ones) * std::pow(1.0 - spec.p, static_cast<double>(d) - ones);
  }
  return Posterior(std::move(support), std::move(prob));
}

Posterior initial_posterior(const PriorSpec& spec, const GridSpec& grid) {
  if (const auto* b = std::get_if<BernoulliStructurePrior>(&spec)) return prior_density(*b);
  return prior_density(spec, RateGrid::uniform(prior_dimension(spec), grid.h_max, grid.nodes));
}

Posterior bayes_update(const Posterior& post, const ChainModel& model, State x_prev, double dt, State x_obs) {
  require(post.dims() == model.rate_dim(), ErrorCode::DimensionMismatch, "posterior dimension does not match model");
  require(x_obs < model.num_states(), ErrorCode::InvalidArgument,
          "observed state " + std::to_string(x_obs) + " is outside the model's state space");
  require(x_prev < model.num_states(), ErrorCode::InvalidArgument, "previous state outside the model's state space");
  require(std::isfinite(dt) && dt >= 0.0, ErrorCode::InvalidArgument, "update interval must be finite and >= 0");

  const Support& support = post.support();
  std::vector<double> density(post.density().begin(), post.density().end());
  std::vector<double> row(model.num_states());
  double total = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    if (density[i] == 0.0) continue;
    transition_row(model, support.point(i), x_prev, dt, row);
    density[i] *= row[x_obs];
    total += density[i] * support.weight(i);
  }
  if (!(total > 0.0)) {
    fail(ErrorCode::ImpossibleObservation, "observation has zero likelihood everywhere on the grid");
  }
  for (double& v : density) v /= total;
  return post.with_density(std::move(density));
}

Posterior bayes_update(const Posterior& post, const ChainModel& model, const Observation& prev,
                       const Observation& obs) {
  if (model.protocol() == Protocol::ResetEachSample) {
    require(obs.t >= 0.0, ErrorCode::InvalidArgument, "reset-protocol sample time must be >= 0");
    return bayes_update(post, model, model.initial_state(), obs.t, obs.x);
  }
  require(obs.t >= prev.t, ErrorCode::InvalidArgument, "observation times must not decrease along a trajectory");
  return bayes_update(post, model, prev.x, obs.t - prev.t, obs.x);
}

RateVector posterior_mean(const Posterior& post) {
  const std::size_t d = post.dims();
  std::vector<double> mean(d, 0.0);
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double m = post.mass(i);
    if (m == 0.0) continue;
    const auto pt = post.support().point(i);
    for (std::size_t k = 0; k < d; ++k) mean[k] += m * pt[k];
  }
  return RateVector(std::move(mean));
}

CovarianceMatrix posterior_covariance(const Posterior& post) {
  const std::size_t d = post.dims();
  const RateVector mean = posterior_mean(post);
  CovarianceMatrix cov = CovarianceMatrix::Zero(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
  std::vector<double> centered(d);
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double m = post.mass(i);
    if (m == 0.0) continue;
    const auto pt = post.support().point(i);
    for (std::size_t k = 0; k < d; ++k) centered[k] = pt[k] - mean[k];
    for (std::size_t r = 0; r < d; ++r) {
      for (std::size_t c = r; c < d; ++c) cov(r, c) += m * centered[r] * centered[c];
    }
  }
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    for (Eigen::Index c = 0; c < r; ++c) cov(r, c) = cov(c, r);
  }
  return cov;
}

double posterior_spread(const Posterior& post) {
  const CovarianceMatrix cov = posterior_covariance(post);
  if (cov.rows() == 1) return cov(0, 0);
  return cov.determinant();
}

double mse(const Posterior& post, const RateVector& h_true, std::size_t component) {
  require(h_true.size() == post.dims(), ErrorCode::DimensionMismatch, "mse: true rate dimension mismatch");
  require(component < post.dims(), ErrorCode::InvalidArgument, "mse: component out of range");
  double total = 0.0;
  for (std::size_t i = 0; i < post.size(); ++i) {
    const double m = post.mass(i);
    if (m == 0.0) continue;
    const double diff = post.support().point(i)[component] - h_true[component];
    total += m * diff * diff;
  }
  return total;
}

double mae(const RateVector& h_map, const RateVector& h_true, std::size_t d_max) {
  require(h_map.size() == h_true.size(), ErrorCode::DimensionMismatch, "mae: rate vectors differ in length");
  require(d_max >= h_map.size() && d_max > 0, ErrorCode::InvalidArgument, "mae: d_max must cover every rate");
  double total = 0.0;
  for (std::size_t k = 0; k < h_map.size(); ++k) total += std::abs(h_map[k] - h_true[k]);
  return total / static_cast<double>(d_max);
}

std::size_t map_index(const Posterior& post) {
  const auto density = post.density();
  return static_cast<std::size_t>(std::max_element(density.begin(), density.end()) - density.begin());
}

RateVector map_estimate(const Posterior& post) {
  const auto pt = post.support().point(map_index(post));
  return RateVector(std::vector<double>(pt.begin(), pt.end()));
}

std::vector<double> marginal_density(const Posterior& post, std::size_t dim) {
  const RateGrid& grid = post.support().grid();
  require(dim < grid.dims(), ErrorCode::InvalidArgument, "marginal: dimension out of range");
  const auto shape = grid.shape();
  std::size_t stride = 1;
  for (std::size_t d = dim + 1; d < shape.size(); ++d) stride *= shape[d];
  std::vector<double> out(shape[dim], 0.0);
  for (std::size_t i = 0; i < post.size(); ++i) {
    const std::size_t k = (i / stride) % shape[dim];
    out[k] += post.mass(i) / grid.axis(dim).weights[k];
  }
  return out;
}

RateVector sample_rates(const Posterior& post, Rng& rng, bool jitter) {
  const double u = uniform01(rng) * post.total_mass();
  double cumulative = 0.0;
  std::size_t chosen = post.size() - 1;
  for (std::size_t i = 0; i < post.size(); ++i) {
    cumulative += post.mass(i);
    if (u < cumulative && post.mass(i) > 0.0) {
      chosen = i;
      break;
    }
  }
  const auto pt = post.support().point(chosen);
  std::vector<double> h(pt.begin(), pt.end());
  if (!jitter || post.kind() == SupportKind::Configurations) return RateVector(std::move(h));

  const RateGrid& grid = post.support().grid();
  for (std::size_t d = 0; d < h.size(); ++d) {
    const auto& nodes = grid.axis(d).nodes;
    const auto it = std::lower_bound(nodes.begin(), nodes.end(), h[d]);
    const auto k = static_cast<std::size_t>(it - nodes.begin());
    const double lo = k == 0 ? nodes[0] : 0.5 * (nodes[k - 1] + nodes[k]);
    const double hi = k + 1 == nodes.size() ? nodes[k] : 0.5 * (nodes[k] + nodes[k + 1]);
    h[d] = lo + (hi - lo) * uniform01(rng);
  }
  return RateVector(std::move(h));
}

}  // namespace adaptrate
