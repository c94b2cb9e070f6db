#include <gtest/gtest.h>

#include <cmath>

#include <boost/math/distributions/students_t.hpp>

#include "difftune/errors.hpp"
#include "difftune/metrics.hpp"
#include "difftune/rng.hpp"

using namespace difftune::metrics;
using difftune::Rng;

TEST(Gap, Examples) {
  EXPECT_NEAR(gap(0.25, 0.30), 0.05, 1e-15);
  EXPECT_EQ(gap(0.4, 0.4), 0.0);
  EXPECT_NEAR(gap(0.9, 0.25), 0.65, 1e-15);
}

TEST(Gap, SymmetricAndBounded) {
  Rng rng(1);
  for (int k = 0; k < 1000; ++k) {
    const double a = rng.uniform01();
    const double b = rng.uniform01();
    EXPECT_EQ(gap(a, b), gap(b, a));
    EXPECT_GE(gap(a, b), 0.0);
    EXPECT_LE(gap(a, b), 1.0);
  }
}

TEST(Levels, Registry) {
  EXPECT_EQ(level_of("hard").rho, 0.25);
  EXPECT_EQ(level_of("medium").rho, 0.50);
  EXPECT_EQ(level_of("easy").rho, 0.75);
  EXPECT_EQ(level_of("trivial").rho, 0.90);
  EXPECT_THROW(level_of("extreme"), difftune::UnknownLevel);
  ASSERT_EQ(levels().size(), 4U);
  EXPECT_EQ(levels()[0].name, "hard");
}

TEST(StudentT, MatchesBoost) {
  for (int dof : {1, 2, 3, 5, 10, 30}) {
    boost::math::students_t dist(dof);
    for (double p : {0.01, 0.1, 0.3, 0.5, 0.8, 0.95, 0.975, 0.995}) {
      EXPECT_NEAR(student_t_quantile(p, dof), boost::math::quantile(dist, p), 1e-8) << dof << " " << p;
    }
  }
}

TEST(StudentT, TableValue) {
  EXPECT_NEAR(student_t_quantile(0.975, 3), 3.1824, 1e-4);
  EXPECT_THROW(student_t_quantile(1.0, 3), difftune::InvalidArgument);
  EXPECT_THROW(student_t_quantile(0.5, 0), difftune::InvalidArgument);
}

TEST(Ci, Examples) {
  const auto ci = aggregate_ci({0.2, 0.3, 0.4});
  EXPECT_NEAR(ci.mean, 0.3, 1e-12);
  EXPECT_NEAR(ci.half_width, 0.1837, 1e-4);
  const auto flat = aggregate_ci({0.7, 0.7, 0.7, 0.7});
  EXPECT_EQ(flat.half_width, 0.0);
  const auto two = aggregate_ci({0.4, 0.4});
  EXPECT_NEAR(two.mean, 0.4, 1e-15);
  EXPECT_EQ(two.half_width, 0.0);
  EXPECT_THROW(aggregate_ci({0.5}), difftune::InsufficientData);
  EXPECT_THROW(aggregate_ci({}), difftune::InsufficientData);
}

TEST(Ci, ThreeDofRegardlessOfCount) {
  const std::vector<double> v = {0.1, 0.4, 0.2, 0.5, 0.3, 0.6};
  boost::math::students_t dist(3);
  const double t = boost::math::quantile(dist, 0.975);
  const double s = sample_stddev(v);
  EXPECT_NEAR(aggregate_ci(v).half_width, t * s / std::sqrt(6.0), 1e-9);
  const double t90 = boost::math::quantile(dist, 0.95);
  EXPECT_NEAR(aggregate_ci(v, 0.90).half_width, t90 * s / std::sqrt(6.0), 1e-9);
}

TEST(Ci, HalfWidthScalesWithSpread) {
  Rng rng(2);
  for (int k = 0; k < 200; ++k) {
    std::vector<double> v(2 + rng.index(8));
    for (auto& x : v) x = rng.uniform01();
    const double c = 0.1 + rng.uniform01() * 5;
    std::vector<double> scaled;
    for (double x : v) scaled.push_back(c * x);
    EXPECT_NEAR(aggregate_ci(scaled).half_width, c * aggregate_ci(v).half_width, 1e-9);
    std::vector<double> shifted;
    for (double x : v) shifted.push_back(x + 3.0);
    EXPECT_NEAR(aggregate_ci(shifted).half_width, aggregate_ci(v).half_width, 1e-9);
  }
}

TEST(Stats, MeanAndStddev) {
  EXPECT_DOUBLE_EQ(mean({1, 2, 3, 4}), 2.5);
  EXPECT_NEAR(sample_stddev({0.2, 0.3, 0.4}), 0.1, 1e-12);
  EXPECT_EQ(sample_stddev({5}), 0.0);
  EXPECT_THROW(mean({}), difftune::InsufficientData);
}
