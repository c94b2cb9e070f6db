#include "difftune/surrogate.hpp"

#include <algorithm>
#include <limits>
#include <numeric>
#include <tuple>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "difftune/errors.hpp"
#include "difftune/rng.hpp"

namespace difftune::designers {

double SurrogateModel::predict(const std::vector<double>& features) const {
  if (features.size() != weights.size()) {
    throw InvalidArgument(fmt::format("surrogate expects {} features, got {}", weights.size(),
                                      features.size()));
  }
  double y = intercept;
  for (std::size_t i = 0; i < features.size(); ++i) y += weights[i] * features[i];
  return y;
}

double SurrogateModel::predict(const paramspace::ParameterSpec& spec,
                               const paramspace::ParamConfig& config) const {
  return predict(paramspace::featurize(spec, config));
}

SurrogateModel fit_ridge(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& targets, double lambda) {
  if (rows.empty() || rows.size() != targets.size()) {
    throw InvalidArgument("ridge fit needs one target per non-empty row set");
  }
  const auto n = static_cast<Eigen::Index>(rows.size());
  const auto d = static_cast<Eigen::Index>(rows.front().size());
  Eigen::MatrixXd x(n, d);
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index k = 0; k < d; ++k) x(i, k) = rows[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
    y(i) = targets[static_cast<std::size_t>(i)];
  }
  const Eigen::RowVectorXd x_mean = x.colwise().mean();
  const double y_mean = y.mean();
  const Eigen::MatrixXd xc = x.rowwise() - x_mean;
  const Eigen::VectorXd yc = y.array() - y_mean;
  Eigen::MatrixXd gram = xc.transpose() * xc;
  gram.diagonal().array() += lambda;
  const Eigen::VectorXd w = gram.ldlt().solve(xc.transpose() * yc);

  SurrogateModel m;
  m.lambda = lambda;
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercept = y_mean - x_mean.dot(w);
  return m;
}

double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted) {
  const double mean = std::accumulate(truth.begin(), truth.end(), 0.0) /
                      static_cast<double>(truth.size());
  double ss_res = 0.0;
  double ss_tot = 0.0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    ss_res += (truth[i] - predicted[i]) * (truth[i] - predicted[i]);
    ss_tot += (truth[i] - mean) * (truth[i] - mean);
  }
  if (ss_tot == 0.0) return ss_res <= 1e-24 ? 1.0 : 0.0;
  return 1.0 - ss_res / ss_tot;
}

SurrogateModel train_surrogate(const std::vector<Sample>& samples,
                               const paramspace::ParameterSpec& spec, const RidgeConfig& config) {
  if (samples.size() < kMinSurrogateSamples) {
    throw InvalidArgument(fmt::format("surrogate training needs at least {} samples, got {}",
                                      kMinSurrogateSamples, samples.size()));
  }
  if (config.lambdas.empty()) throw InvalidArgument("ridge needs at least one lambda");
  if (config.folds < 2 || config.folds > samples.size()) {
    throw InvalidArgument("fold count must lie in [2, number of samples]");
  }

  struct Row {
    std::string key;
    std::vector<double> features;
    double gap;
  };
  std::vector<Row> data;
  data.reserve(samples.size());
  for (const auto& s : samples) {
    data.push_back({paramspace::canonical_json(s.config), paramspace::featurize(spec, s.config), s.gap});
  }
  std::sort(data.begin(), data.end(), [](const Row& a, const Row& b) {
    return std::tie(a.key, a.gap) < std::tie(b.key, b.gap);
  });
  const bool degenerate = std::all_of(data.begin(), data.end(), [&](const Row& r) {
    return r.features == data.front().features;
  });
  if (degenerate) throw DegenerateDesign("every training config has the same features");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(config.fold_seed);
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::size_t> fold_of(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) fold_of[order[i]] = i % config.folds;

  double best_mse = std::numeric_limits<double>::infinity();
  double best_lambda = config.lambdas.front();
  std::vector<double> best_r2;
  for (double lambda : config.lambdas) {
    double sq_err = 0.0;
    std::vector<double> r2;
    for (std::size_t f = 0; f < config.folds; ++f) {
      std::vector<std::vector<double>> train_x;
      std::vector<double> train_y;
      std::vector<double> test_y;
      std::vector<double> test_pred;
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (fold_of[i] != f) {
          train_x.push_back(data[i].features);
          train_y.push_back(data[i].gap);
        }
      }
      const auto model = fit_ridge(train_x, train_y, lambda);
      for (std::size_t i = 0; i < data.size(); ++i) {
        if (fold_of[i] == f) {
          const double pred = model.predict(data[i].features);
          sq_err += (pred - data[i].gap) * (pred - data[i].gap);
          test_y.push_back(data[i].gap);
          test_pred.push_back(pred);
        }
      }
      r2.push_back(r_squared(test_y, test_pred));
    }
    const double mse = sq_err / static_cast<double>(data.size());
    if (mse < best_mse) {
      best_mse = mse;
      best_lambda = lambda;
      best_r2 = std::move(r2);
    }
  }

  std::vector<std::vector<double>> all_x;
  std::vector<double> all_y;
  for (const auto& r : data) {
    all_x.push_back(r.features);
    all_y.push_back(r.gap);
  }
  SurrogateModel model = fit_ridge(all_x, all_y, best_lambda);
  model.fold_r2 = std::move(best_r2);
  model.cv_mse = best_mse;
  return model;
}

std::size_t bon_ml_select(const SurrogateModel& model, const paramspace::ParameterSpec& spec,
                          const std::vector<paramspace::ParamConfig>& candidates) {
  if (candidates.empty()) throw InvalidArgument("best-of-N needs at least one candidate");
  std::size_t best = 0;
  double best_pred = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double p = model.predict(spec, candidates[i]);
    if (p < best_pred) {
      best_pred = p;
      best = i;
    }
  }
  return best;
}

nlohmann::json surrogate_to_json(const SurrogateModel& m) {
  return {{"weights", m.weights}, {"intercept", m.intercept}, {"lambda", m.lambda},
          {"fold_r2", m.fold_r2}, {"cv_mse", m.cv_mse}};
}

}  // namespace difftune::designers
