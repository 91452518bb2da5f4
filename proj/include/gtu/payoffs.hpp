#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "gtu/types.hpp"

namespace gtu {

enum class PayoffKind {
  Outperformer,        // (S2 - S1)+ on two assets
  OutperformerSpread,  // (S2 - lo S1)+ - (S2 - hi S1)+
  GeoCallSpread,       // call spread on the geometric mean of all assets
  GeoOutperformer,     // (geomean(S2..Sd) - S1)+
  CallSharpe,          // (S - K)+ / sqrt(realized variance of monthly log returns)
};

struct PayoffSpec {
  PayoffKind kind = PayoffKind::Outperformer;
  double k1 = 90.0, k2 = 110.0;  // geo call spread strikes
  double lo = 0.9, hi = 1.1;     // spread multiples of the first asset
  double strike = 100.0;         // call-sharpe strike
  int monitor_count = 12;        // call-sharpe fixings over the horizon

  static PayoffSpec outperformer() { return PayoffSpec{PayoffKind::Outperformer}; }
  static PayoffSpec outperformer_spread(double lo = 0.9, double hi = 1.1) {
    PayoffSpec p;
    p.kind = PayoffKind::OutperformerSpread;
    p.lo = lo;
    p.hi = hi;
    return p;
  }
  static PayoffSpec geo_call_spread(double k1 = 90.0, double k2 = 110.0) {
    PayoffSpec p;
    p.kind = PayoffKind::GeoCallSpread;
    p.k1 = k1;
    p.k2 = k2;
    return p;
  }
  static PayoffSpec geo_outperformer() { return PayoffSpec{PayoffKind::GeoOutperformer}; }
  static PayoffSpec call_sharpe(double strike = 100.0, int fixings = 12) {
    PayoffSpec p;
    p.kind = PayoffKind::CallSharpe;
    p.strike = strike;
    p.monitor_count = fixings;
    return p;
  }

  bool path_dependent() const { return kind == PayoffKind::CallSharpe; }

  void validate(const ModelSpec& m) const {
    switch (kind) {
      case PayoffKind::Outperformer:
        if (m.d != 2) throw std::invalid_argument("payoff: outperformer needs exactly 2 assets");
        break;
      case PayoffKind::OutperformerSpread:
        if (m.d != 2) throw std::invalid_argument("payoff: outperformer spread needs exactly 2 assets");
        if (!(lo <= hi)) throw std::invalid_argument("payoff: spread needs lo <= hi");
        break;
      case PayoffKind::GeoCallSpread:
        if (!(k1 <= k2)) throw std::invalid_argument("payoff: call spread needs k1 <= k2");
        break;
      case PayoffKind::GeoOutperformer:
        if (m.d < 2) throw std::invalid_argument("payoff: geo outperformer needs >= 2 assets");
        break;
      case PayoffKind::CallSharpe:
        if (m.d != 1) throw std::invalid_argument("payoff: call sharpe is single-asset");
        if (monitor_count < 1) throw std::invalid_argument("payoff: need at least one fixing");
        if (strike <= 0.0) throw std::invalid_argument("payoff: strike must be positive");
        break;
    }
  }
};

// Terminal payoff. Basket payoffs take the spot vector; the sharpe payoff
// takes the reduced state (spot, accumulated squared monthly log returns).
inline double payoff_eval(const PayoffSpec& p, const Eigen::VectorXd& state, double horizon = 1.0) {
  switch (p.kind) {
    case PayoffKind::Outperformer:
      return std::max(state[1] - state[0], 0.0);
    case PayoffKind::OutperformerSpread:
      return std::max(state[1] - p.lo * state[0], 0.0) - std::max(state[1] - p.hi * state[0], 0.0);
    case PayoffKind::GeoCallSpread: {
      double g = std::exp(state.array().log().mean());
      return std::max(g - p.k1, 0.0) - std::max(g - p.k2, 0.0);
    }
    case PayoffKind::GeoOutperformer: {
      const long d = state.size();
      double g = std::exp(state.tail(d - 1).array().log().mean());
      return std::max(g - state[0], 0.0);
    }
    case PayoffKind::CallSharpe: {
      double variance = std::max(state[1], 1e-12) / horizon;
      return std::max(state[0] - p.strike, 0.0) / std::sqrt(variance);
    }
  }
  throw std::logic_error("payoff_eval: unknown payoff");
}

}  // namespace gtu
