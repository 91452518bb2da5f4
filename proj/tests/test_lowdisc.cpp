#include "gtu/lowdisc.hpp"

#include <gtest/gtest.h>

#include <cmath>

namespace {

// Independent quantile oracle: bisect the (erfc-based) forward CDF.
double quantile_by_bisection(double u) {
  double lo = -40.0, hi = 40.0;
  for (int k = 0; k < 200; ++k) {
    double mid = 0.5 * (lo + hi);
    (gtu::norm_cdf(mid) < u ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

TEST(LowDisc, FirstPrimes) {
  auto p = gtu::first_primes(8);
  ASSERT_EQ(p.size(), 8u);
  EXPECT_EQ(p[0], 2u);
  EXPECT_EQ(p[1], 3u);
  EXPECT_EQ(p[2], 5u);
  EXPECT_EQ(p[3], 7u);
  EXPECT_EQ(p[7], 19u);
}

TEST(LowDisc, HaltonFirstPointsBases2And3) {
  gtu::HaltonState st(2);
  Eigen::VectorXd p1 = gtu::halton_next(st);
  Eigen::VectorXd p2 = gtu::halton_next(st);
  Eigen::VectorXd p3 = gtu::halton_next(st);
  Eigen::VectorXd p4 = gtu::halton_next(st);
  EXPECT_DOUBLE_EQ(p1[0], 1.0 / 2.0);
  EXPECT_DOUBLE_EQ(p1[1], 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(p2[0], 1.0 / 4.0);
  EXPECT_DOUBLE_EQ(p2[1], 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(p3[0], 3.0 / 4.0);
  EXPECT_DOUBLE_EQ(p3[1], 1.0 / 9.0);
  EXPECT_DOUBLE_EQ(p4[0], 1.0 / 8.0);
  EXPECT_DOUBLE_EQ(p4[1], 4.0 / 9.0);
}

// Index 5 in bases (2,3,5). Base 2: digits 101 reflect to 0.101b = 5/8.
// Base 3: digits 12 reflect to 0.21 in base 3 = 2/3 + 1/9 = 7/9.
// Base 5: digits 10 reflect to 0.01 in base 5 = 1/25.
TEST(LowDisc, HaltonIndexFiveDigitReversal) {
  gtu::HaltonState st(3);
  Eigen::VectorXd p;
  for (int k = 0; k < 5; ++k) p = gtu::halton_next(st);
  EXPECT_NEAR(p[0], 0.625, 1e-15);
  EXPECT_NEAR(p[1], 7.0 / 9.0, 1e-15);
  EXPECT_NEAR(p[2], 0.04, 1e-15);
  EXPECT_EQ(st.index, 6u);
}

TEST(LowDisc, HaltonStaysInOpenUnitCube) {
  gtu::HaltonState st(8);
  for (int k = 0; k < 10000; ++k) {
    Eigen::VectorXd p = gtu::halton_next(st);
    ASSERT_TRUE((p.array() > 0.0).all() && (p.array() < 1.0).all());
  }
}

TEST(LowDisc, HaltonRestartsIdentically) {
  gtu::HaltonState a(4), b(4);
  for (int k = 0; k < 50; ++k) {
    EXPECT_TRUE(gtu::halton_next(a) == gtu::halton_next(b));
  }
}

// Anchored dyadic boxes [0,2^-m1) x [0,2^-m2). With 1000 points the empirical
// mass of each box must sit within a factor of two of its volume.
TEST(LowDisc, HaltonDyadicBoxEquidistribution) {
  const int n = 1000;
  gtu::HaltonState st(2);
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < n; ++k) pts.push_back(gtu::halton_next(st));
  for (int m1 = 0; m1 <= 2; ++m1) {
    for (int m2 = 0; m2 <= 2; ++m2) {
      double v1 = std::ldexp(1.0, -m1), v2 = std::ldexp(1.0, -m2);
      int count = 0;
      for (const auto& p : pts) count += (p[0] < v1 && p[1] < v2) ? 1 : 0;
      double expected = v1 * v2 * n;
      EXPECT_GE(count, 0.5 * expected) << "box " << m1 << "," << m2;
      EXPECT_LE(count, 2.0 * expected) << "box " << m1 << "," << m2;
    }
  }
}

TEST(LowDisc, InverseCdfHitsTargetProbability) {
  const double us[] = {1e-9,     1e-6,  0.0013499, 0.02425, 0.025, 0.158655,
                       0.5,      0.841345, 0.975,  0.977,   0.99865, 1.0 - 1e-6,
                       1.0 - 1e-9};
  for (double u : us) {
    double z = gtu::inv_norm_cdf(u);
    EXPECT_NEAR(gtu::norm_cdf(z), u, 1e-9) << "u=" << u;
  }
}

TEST(LowDisc, InverseCdfMatchesBisectionOracle) {
  EXPECT_NEAR(gtu::inv_norm_cdf(0.975), 1.959963984540054, 1e-9);
  EXPECT_NEAR(gtu::inv_norm_cdf(0.5), 0.0, 1e-15);
  for (double u : {0.001, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999}) {
    EXPECT_NEAR(gtu::inv_norm_cdf(u), quantile_by_bisection(u), 1e-9) << "u=" << u;
  }
}

TEST(LowDisc, InverseCdfRoundTrip) {
  for (double z : {-6.0, -3.0, -1.0, -0.2, 0.0, 0.5, 2.0, 5.0}) {
    if (z == 0.0) continue;
    EXPECT_NEAR(gtu::inv_norm_cdf(gtu::norm_cdf(z)), z, 1e-6) << "z=" << z;
  }
}

TEST(LowDisc, InverseCdfRejectsClosedEndpoints) {
  EXPECT_THROW(gtu::inv_norm_cdf(0.0), std::domain_error);
  EXPECT_THROW(gtu::inv_norm_cdf(1.0), std::domain_error);
  EXPECT_THROW(gtu::inv_norm_cdf(-0.5), std::domain_error);
}

}  // namespace
