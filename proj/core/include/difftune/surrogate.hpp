#pragma once

// Ridge-regression gap predictor over featurized configs.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "difftune/paramspace.hpp"

namespace difftune::designers {

struct Sample {
  paramspace::ParamConfig config;
  double gap = 0.0;
};

struct RidgeConfig {
  std::vector<double> lambdas = {0.01, 0.1, 1.0, 10.0};
  std::size_t folds = 5;
  std::uint64_t fold_seed = 0;
};

struct SurrogateModel {
  std::vector<double> weights;
  double intercept = 0.0;
  double lambda = 0.0;
  /// Held-out R^2 per fold at the chosen lambda.
  std::vector<double> fold_r2;
  double cv_mse = 0.0;

  double predict(const std::vector<double>& features) const;
  double predict(const paramspace::ParameterSpec& spec, const paramspace::ParamConfig& config) const;
};

inline constexpr std::size_t kMinSurrogateSamples = 10;

/// Fits w, b minimizing |Xw + b - g|^2 + lambda |w|^2 (intercept not
/// penalized), lambda picked by k-fold cross-validated MSE; ties keep the
/// smaller lambda. Samples are put in canonical order before fold
/// assignment, so the fit does not depend on input order. InvalidArgument
/// below kMinSurrogateSamples; DegenerateDesign when every feature row is
/// identical.
SurrogateModel train_surrogate(const std::vector<Sample>& samples,
                               const paramspace::ParameterSpec& spec,
                               const RidgeConfig& config = {});

/// Closed-form ridge fit on raw rows, exposed for tests.
SurrogateModel fit_ridge(const std::vector<std::vector<double>>& rows,
                         const std::vector<double>& targets, double lambda);

/// 1 - SS_res / SS_tot. When the targets are constant: 1 for a perfect
/// prediction, 0 otherwise.
double r_squared(const std::vector<double>& truth, const std::vector<double>& predicted);

/// Index of the smallest predicted gap; ties resolve to the lowest index.
std::size_t bon_ml_select(const SurrogateModel& model, const paramspace::ParameterSpec& spec,
                          const std::vector<paramspace::ParamConfig>& candidates);

nlohmann::json surrogate_to_json(const SurrogateModel& model);

}  // namespace difftune::designers
