#include "difftune/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "difftune/errors.hpp"

namespace difftune::metrics {

double gap(double rho, double rho_hat) { return std::fabs(rho_hat - rho); }

const std::vector<DifficultyLevel>& levels() {
  static const std::vector<DifficultyLevel> kLevels = {
      {"hard", 0.25}, {"medium", 0.50}, {"easy", 0.75}, {"trivial", 0.90}};
  return kLevels;
}

DifficultyLevel level_of(std::string_view name) {
  for (const auto& l : levels()) {
    if (l.name == name) return l;
  }
  throw UnknownLevel(fmt::format("unknown difficulty level '{}'", name));
}

namespace {

// P(T <= t) for Student's t with `dof` degrees of freedom, through the
// regularized incomplete beta function (continued fraction).
double incomplete_beta(double a, double b, double x) {
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  if (x > (a + 1.0) / (a + b + 2.0)) return 1.0 - incomplete_beta(b, a, 1.0 - x);
  const double log_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                           a * std::log(x) + b * std::log1p(-x);
  constexpr double kTiny = 1e-300;
  double c = 1.0;
  double d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::fabs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double f = d;
  for (int m = 1; m <= 300; ++m) {
    const double md = m;
    double num = md * (b - md) * x / ((a + 2.0 * md - 1.0) * (a + 2.0 * md));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    f *= d * c;
    num = -(a + md) * (a + b + md) * x / ((a + 2.0 * md) * (a + 2.0 * md + 1.0));
    d = 1.0 + num * d;
    if (std::fabs(d) < kTiny) d = kTiny;
    c = 1.0 + num / c;
    if (std::fabs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double delta = d * c;
    f *= delta;
    if (std::fabs(delta - 1.0) < 1e-15) break;
  }
  return std::exp(log_front) * f / a;
}

double student_t_cdf(double t, int dof) {
  const double v = dof;
  const double tail = 0.5 * incomplete_beta(v / 2.0, 0.5, v / (v + t * t));
  return t >= 0.0 ? 1.0 - tail : tail;
}

}  // namespace

double student_t_quantile(double p, int dof) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("quantile level must lie in (0, 1)");
  if (dof < 1) throw InvalidArgument("degrees of freedom must be positive");
  if (p == 0.5) return 0.0;
  double lo = -1.0;
  double hi = 1.0;
  while (student_t_cdf(lo, dof) > p) lo *= 2.0;
  while (student_t_cdf(hi, dof) < p) hi *= 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (student_t_cdf(mid, dof) < p ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double mean(const std::vector<double>& values) {
  if (values.empty()) throw InsufficientData("mean of an empty list");
  double sum = 0.0;
  for (double v : values) sum += v;
  return sum / static_cast<double>(values.size());
}

double sample_stddev(const std::vector<double>& values) {
  if (values.size() < 2) return 0.0;
  const double m = mean(values);
  double ss = 0.0;
  for (double v : values) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(values.size() - 1));
}

Interval aggregate_ci(const std::vector<double>& values, double confidence) {
  if (values.size() < 2) {
    throw InsufficientData(
        fmt::format("a confidence interval needs at least 2 values, got {}", values.size()));
  }
  if (!(confidence > 0.0 && confidence < 1.0)) {
    throw InvalidArgument("confidence must lie in (0, 1)");
  }
  const double t = student_t_quantile(1.0 - (1.0 - confidence) / 2.0, kCiDegreesOfFreedom);
  const double n = static_cast<double>(values.size());
  return {mean(values), t * sample_stddev(values) / std::sqrt(n)};
}

}  // namespace difftune::metrics
