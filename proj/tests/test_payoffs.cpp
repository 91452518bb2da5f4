#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>

#include "gtu/payoffs.hpp"
#include "gtu/types.hpp"

namespace {

using gtu::ModelSpec;
using gtu::payoff_eval;
using gtu::PayoffSpec;

Eigen::VectorXd state2(double a, double b) {
  Eigen::VectorXd s(2);
  s << a, b;
  return s;
}

Eigen::VectorXd state3(double a, double b, double c) {
  Eigen::VectorXd s(3);
  s << a, b, c;
  return s;
}

TEST(Payoffs, OutperformerPaysSecondAssetExcessOverFirst) {
  PayoffSpec p = PayoffSpec::outperformer();
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(90.0, 100.0)), 10.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 90.0)), 0.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 100.0)), 0.0);
}

TEST(Payoffs, OutperformerSpreadCapsTheGain) {
  PayoffSpec p = PayoffSpec::outperformer_spread(0.9, 1.1);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 80.0)), 0.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 95.0)), 5.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 100.0)), 10.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 120.0)), 20.0);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(100.0, 500.0)), 20.0);
}

TEST(Payoffs, GeoCallSpreadUsesTheGeometricMean) {
  PayoffSpec p = PayoffSpec::geo_call_spread(90.0, 110.0);
  EXPECT_NEAR(payoff_eval(p, state2(121.0, 81.0)), 9.0, 1e-12);  // sqrt(121*81) = 99
  EXPECT_NEAR(payoff_eval(p, state2(100.0, 100.0)), 10.0, 1e-12);
  EXPECT_NEAR(payoff_eval(p, state2(144.0, 121.0)), 20.0, 1e-12);  // geo mean 132, capped
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(81.0, 81.0)), 0.0);
}

TEST(Payoffs, GeoOutperformerComparesTailBasketToFirstAsset) {
  PayoffSpec p = PayoffSpec::geo_outperformer();
  double geo = std::sqrt(110.0 * 90.0);
  EXPECT_NEAR(payoff_eval(p, state3(90.0, 110.0, 90.0)), geo - 90.0, 1e-12);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state3(120.0, 110.0, 90.0)), 0.0);
}

TEST(Payoffs, CallSharpeDividesByRealizedVolatility) {
  PayoffSpec p = PayoffSpec::call_sharpe(100.0, 12);
  // accumulated squared returns of 0.04 over one year is a realized vol of 0.2
  EXPECT_NEAR(payoff_eval(p, state2(120.0, 0.04), 1.0), 100.0, 1e-12);
  EXPECT_DOUBLE_EQ(payoff_eval(p, state2(90.0, 0.04), 1.0), 0.0);
  // a shorter horizon annualizes the same accumulation to a higher variance
  EXPECT_NEAR(payoff_eval(p, state2(120.0, 0.04), 0.5), 20.0 / std::sqrt(0.08), 1e-12);
  // zero accumulation is floored instead of dividing by zero
  EXPECT_TRUE(std::isfinite(payoff_eval(p, state2(120.0, 0.0), 1.0)));
}

TEST(Payoffs, ValidateRejectsMismatchedModels) {
  ModelSpec m1 = ModelSpec::symmetric(1, 100.0, 0.0, 0.0, 0.1, 0.2, 0.0, 0.0, 1.0);
  ModelSpec m2 = ModelSpec::symmetric(2, 100.0, 0.0, 0.0, 0.1, 0.2, -0.5, 0.5, 1.0);
  ModelSpec m3 = ModelSpec::symmetric(3, 100.0, 0.0, 0.0, 0.1, 0.2, -0.4, 0.4, 1.0);

  EXPECT_NO_THROW(PayoffSpec::outperformer().validate(m2));
  EXPECT_THROW(PayoffSpec::outperformer().validate(m3), std::invalid_argument);
  EXPECT_THROW(PayoffSpec::outperformer_spread(1.1, 0.9).validate(m2), std::invalid_argument);
  EXPECT_THROW(PayoffSpec::geo_call_spread(110.0, 90.0).validate(m2), std::invalid_argument);
  EXPECT_NO_THROW(PayoffSpec::geo_call_spread(90.0, 110.0).validate(m1));
  EXPECT_NO_THROW(PayoffSpec::geo_outperformer().validate(m3));
  EXPECT_THROW(PayoffSpec::geo_outperformer().validate(m1), std::invalid_argument);
  EXPECT_NO_THROW(PayoffSpec::call_sharpe(100.0, 12).validate(m1));
  EXPECT_THROW(PayoffSpec::call_sharpe(100.0, 12).validate(m2), std::invalid_argument);
  EXPECT_THROW(PayoffSpec::call_sharpe(-5.0, 12).validate(m1), std::invalid_argument);
  EXPECT_THROW(PayoffSpec::call_sharpe(100.0, 0).validate(m1), std::invalid_argument);
}

}  // namespace
