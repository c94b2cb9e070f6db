#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace difftune::metrics {

/// |rho_hat - rho|.
double gap(double rho, double rho_hat);

struct DifficultyLevel {
  std::string name;
  double rho = 0.0;
};

/// hard 0.25, medium 0.50, easy 0.75, trivial 0.90.
const std::vector<DifficultyLevel>& levels();
/// Throws UnknownLevel.
DifficultyLevel level_of(std::string_view name);

/// Two-sided quantile of Student's t: the x with P(T <= x) = p, for p in
/// (0, 1) and dof >= 1.
double student_t_quantile(double p, int dof);

/// Degrees of freedom used for every interval regardless of sample size.
inline constexpr int kCiDegreesOfFreedom = 3;

struct Interval {
  double mean = 0.0;
  double half_width = 0.0;
};

/// mean and t(1 - (1 - confidence) / 2, 3) * s / sqrt(n), s the sample
/// standard deviation. InsufficientData for fewer than two values.
Interval aggregate_ci(const std::vector<double>& values, double confidence = 0.95);

double mean(const std::vector<double>& values);
/// Sample (n - 1) standard deviation; 0 for fewer than two values.
double sample_stddev(const std::vector<double>& values);

}  // namespace difftune::metrics
