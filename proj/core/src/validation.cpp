#include "adaptrate/validation.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "adaptrate/bayes.hpp"
#include "adaptrate/chain_models.hpp"
#include "adaptrate/design.hpp"
#include "adaptrate/random.hpp"

namespace adaptrate {

namespace {

class Tracker {
 public:
  Tracker(std::string name, double tolerance) { result_.name = std::move(name), result_.tolerance = tolerance; }

  void check(double deviation, const std::string& where) {
    ++result_.checks;
    if (!(deviation <= result_.worst) || std::isnan(deviation)) {
      result_.worst = std::isnan(deviation) ? INFINITY : deviation;
      worst_where_ = where;
    }
  }

  SuiteResult finish() {
    result_.passed = result_.checks > 0 && result_.worst <= result_.tolerance;
    std::ostringstream out;
    out << result_.checks << " checks, worst " << result_.worst;
    if (!worst_where_.empty()) out << " at " << worst_where_;
    result_.detail = out.str();
    return result_;
  }

 private:
  SuiteResult result_;
  std::string worst_where_;
};

std::string describe(std::initializer_list<std::pair<const char*, double>> fields) {
  std::ostringstream out;
  bool first = true;
  for (const auto& [k, v] : fields) {
    out << (first ? "" : " ") << k << "=" << v;
    first = false;
  }
  return out.str();
}

Matrix rows_matrix(const ChainModel& model, const RateVector& h, double dt) {
  const auto n = static_cast<Eigen::Index>(model.num_states());
  Matrix p(n, n);
  std::vector<double> row(model.num_states());
  for (Eigen::Index i = 0; i < n; ++i) {
    transition_row(model, h.span(), static_cast<State>(i), dt, row);
    for (Eigen::Index j = 0; j < n; ++j) p(i, j) = row[static_cast<std::size_t>(j)];
  }
  return p;
}

Posterior random_grid_posterior(std::size_t dims, Rng& rng) {
  const double h_max = 0.5 + 9.5 * uniform01(rng);
  const auto nodes = static_cast<std::size_t>(dims == 1 ? 5 + 60 * uniform01(rng) : 4 + 12 * uniform01(rng));
  const RateGrid grid = RateGrid::uniform(dims, h_max, nodes);
  std::vector<double> density(grid.size());
  // Mixture of sparse spikes and a smooth background, so both broad and
  // nearly degenerate posteriors occur.
  const double background = uniform01(rng) < 0.5 ? uniform01(rng) : 0.0;
  for (double& v : density) v = background * uniform01(rng);
  const auto spikes = 1 + static_cast<std::size_t>(4 * uniform01(rng));
  for (std::size_t s = 0; s < spikes; ++s) {
    density[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(density.size()))] += 1.0 + uniform01(rng);
  }
  return Posterior::on_grid(grid, std::move(density));
}

}  // namespace

SuiteResult check_bidirectional_closed_form() {
  Tracker t("bidirectional closed form vs matrix exponential", 1e-10);
  const ChainModel model = ChainModel::two_state_bidirectional();
  const double rates[] = {0.0, 0.3, 1.0, 2.5, 7.0};
  const double times[] = {0.001, 0.1, 1.0, 3.0, 20.0};
  std::vector<double> row(2);
  for (double h0 : rates) {
    for (double h1 : rates) {
      for (double dt : times) {
        const RateVector h{h0, h1};
        const Matrix exact = expm(build_generator(model, h), dt);
        for (State i = 0; i < 2; ++i) {
          transition_row(model, h.span(), i, dt, row);
          for (State j = 0; j < 2; ++j) {
            t.check(std::abs(row[j] - exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))),
                    describe({{"h0", h0}, {"h1", h1}, {"dt", dt}}));
          }
        }
      }
    }
  }
  return t.finish();
}

SuiteResult check_ring_chapman_kolmogorov() {
  Tracker t("ring Chapman-Kolmogorov", 1e-8);
  const RateVector rate_sets[] = {{0.5, 1.5}, {2.0, 0.0}, {0.0, 0.7}, {3.0, 3.0}, {0.1, 4.0}};
  const double splits[][2] = {{0.1, 0.2}, {0.5, 1.5}, {2.0, 3.0}, {0.01, 10.0}};
  for (std::size_t m = 2; m <= 8; ++m) {
    const ChainModel model = ChainModel::ring(m);
    for (const RateVector& h : rate_sets) {
      for (const auto& st : splits) {
        const Matrix lhs = rows_matrix(model, h, st[0] + st[1]);
        const Matrix rhs = rows_matrix(model, h, st[0]) * rows_matrix(model, h, st[1]);
        t.check((lhs - rhs).cwiseAbs().maxCoeff(),
                describe({{"m", static_cast<double>(m)}, {"h+", h[0]}, {"h-", h[1]}, {"s", st[0]}, {"t", st[1]}}));
      }
    }
  }
  return t.finish();
}

SuiteResult check_mm1_cross_validation() {
  Tracker t("M/M/1 series vs truncated generator", 1e-6);
  const ChainModel truncated = ChainModel::mm1_queue(100);
  const double mu = 2.0;
  for (double ratio : {0.0, 0.25, 0.5, 0.9}) {
    const double lambda = ratio * mu;
    for (double dt : {0.1, 1.0, 5.0}) {
      const Matrix exact = expm(build_generator(truncated, RateVector{lambda, mu}), dt);
      for (State i = 0; i <= 10; ++i) {
        const std::vector<double> row = mm1_transition_row(i, lambda, mu, dt, 10);
        for (State j = 0; j <= 10; ++j) {
          t.check(std::abs(row[j] - exact(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j))),
                  describe({{"rho", ratio}, {"dt", dt}, {"i", static_cast<double>(i)}, {"j", static_cast<double>(j)}}));
        }
      }
    }
  }
  return t.finish();
}

SuiteResult check_row_stochasticity() {
  Tracker t("transition rows are stochastic", 1e-12);
  const std::vector<ChainModel> models = {ChainModel::two_state_unidirectional(), ChainModel::two_state_bidirectional(),
                                          ChainModel::mm1_queue(), ChainModel::ring(5), ChainModel::binary_digraph(3)};
  Rng rng(20240917);
  for (const ChainModel& model : models) {
    std::vector<double> row(model.num_states());
    for (int trial = 0; trial < 40; ++trial) {
      RateVector h(std::vector<double>(model.rate_dim()));
      for (double& v : h.values) v = 5.0 * uniform01(rng);
      if (model.kind() == ChainKind::MM1Queue) h[0] = h[1] * uniform01(rng);
      if (model.kind() == ChainKind::BinaryDigraph) {
        for (double& v : h.values) v = v > 2.5 ? 1.0 : 0.0;
      }
      const double dt = std::exp(std::log(1e-3) + std::log(1e5) * uniform01(rng));
      const auto from = static_cast<State>(uniform01(rng) * static_cast<double>(std::min<std::size_t>(model.num_states(), 8)));
      transition_row(model, h.span(), from, dt, row);
      double sum = 0.0;
      double negative = 0.0;
      for (double p : row) {
        sum += p;
        negative = std::max(negative, -p);
      }
      t.check(std::max(std::abs(sum - 1.0), negative), model.name() + " " + describe({{"dt", dt}}));
    }
  }
  return t.finish();
}

SuiteResult check_total_variance(std::uint64_t seed, std::size_t count) {
  Tracker t("law of total variance", 1e-10);
  Rng rng(seed);
  const ChainModel uni = ChainModel::two_state_unidirectional();
  const ChainModel bi = ChainModel::two_state_bidirectional();
  const ChainModel ring = ChainModel::ring(4);
  for (std::size_t n = 0; n < count; ++n) {
    const double dt = std::exp(std::log(1e-3) + std::log(1e5) * uniform01(rng));
    if (n % 2 == 0) {
      const Posterior post = random_grid_posterior(1, rng);
      const double current = posterior_spread(post);
      t.check(expected_variance(post, uni, 0, dt) - current, describe({{"d", 1}, {"dt", dt}}));
    } else {
      const Posterior post = random_grid_posterior(2, rng);
      const bool use_ring = n % 4 == 1;
      const ChainModel& model = use_ring ? ring : bi;
      const auto x_prev = static_cast<State>(uniform01(rng) * static_cast<double>(model.num_states()));
      const double current = posterior_spread(post);
      const double expected =
          expected_covariance(post, model, x_prev, dt, ObjectiveWeighting::StandardPredictive).determinant();
      t.check(expected - current, model.name() + " " + describe({{"dt", dt}}));
    }
  }
  return t.finish();
}

std::vector<SuiteResult> run_validation_suites(std::uint64_t seed) {
  return {check_bidirectional_closed_form(), check_ring_chapman_kolmogorov(), check_mm1_cross_validation(),
          check_row_stochasticity(), check_total_variance(seed)};
}

}  // namespace adaptrate
