#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <vector>

#include "micc/market.hpp"

namespace micc {

enum class SigmoidVariant {
  UnshiftedSigmoid,     // 1 / (1 + e^{-theta x}), inflection at 0
  CenteredSigmoid,  // 1 / (1 + e^{-theta (x - c)}), inflection at c (default x_star)
};

struct UtilityParams {
  double theta{2.0};
  std::optional<double> center;  // unset: the user's x_star
  double a{1.0};
  double b{1.0};
  // Money value of full satisfaction, in multiples of the user's budget.
  double valuation_scale{1.0};
  SigmoidVariant variant{SigmoidVariant::CenteredSigmoid};
  // Restrict best responses to x * lambda <= m.
  bool budget_cap{true};

  void validate() const {
    if (!(theta > 0.0) || !(a > 0.0) || !(b > 0.0) || !(valuation_scale > 0.0)) {
      throw std::domain_error("utility params: theta, a, b and valuation_scale must be positive");
    }
    if (center && !(*center >= 0.0)) throw std::domain_error("utility params: center must be >= 0");
  }
};

inline double sigmoid_term(double x, const User& user, const UtilityParams& p) {
  const double shift = p.variant == SigmoidVariant::CenteredSigmoid ? p.center.value_or(user.x_star) : 0.0;
  return 1.0 / (1.0 + std::exp(-p.theta * (x - shift)));
}

/// Sigmoid satisfaction plus the budget term m / (x lambda). The denominator
/// is floored at 1e-6 * x_star so the value stays finite at x = 0.
inline double utility(double x, double lambda, const User& user, const UtilityParams& p) {
  if (!(lambda > 0.0)) throw std::domain_error("utility: price must be positive");
  if (!(x >= 0.0)) throw std::domain_error("utility: bandwidth must be non-negative");
  const double eps = 1e-6 * user.x_star;
  return sigmoid_term(x, user, p) + user.budget / (std::max(x, eps) * lambda);
}

/// ((sigma_w + bid / lambda_t) * t)^beta
inline double dissatisfaction(double lambda_t, BidPrice bid, double t, double sigma_w, double beta) {
  if (!(lambda_t > 0.0)) throw std::domain_error("dissatisfaction: price must be positive");
  if (!(t >= 0.0)) throw std::domain_error("dissatisfaction: elapsed time must be non-negative");
  return std::pow((sigma_w + bid.value / lambda_t) * t, beta);
}

inline double dissatisfaction(double lambda_t, BidPrice bid, double t, const User& user) {
  return dissatisfaction(lambda_t, bid, t, user.sigma_w, user.beta);
}

/// Utility including dissatisfaction accumulated over `t` while deprived.
/// Above x_star the plain utility applies.
inline double extended_utility(double x, double lambda, double t, const User& user, const UtilityParams& p) {
  const double u = utility(x, lambda, user, p);
  if (x > user.x_star) return u;
  return p.a * u - p.b * dissatisfaction(lambda, user.bid(), t, user);
}

/// Net money-metric objective maximized by a user at price `lambda`:
/// valuation_scale * m * S(x) - lambda * x, S the configured sigmoid.
inline double net_valuation(double x, double lambda, const User& user, const UtilityParams& p) {
  return p.valuation_scale * user.budget * sigmoid_term(x, user, p) - lambda * x;
}

namespace detail {

template <typename F>
double golden_section_max(F&& f, double lo, double hi, int iters = 80) {
  constexpr double inv_phi = 0.6180339887498949;
  double c = hi - inv_phi * (hi - lo);
  double d = lo + inv_phi * (hi - lo);
  double fc = f(c);
  double fd = f(d);
  for (int i = 0; i < iters && hi - lo > 1e-13 * std::max(1.0, hi); ++i) {
    if (fc >= fd) {
      hi = d;
      d = c;
      fd = fc;
      c = hi - inv_phi * (hi - lo);
      fc = f(c);
    } else {
      lo = c;
      c = d;
      fc = fd;
      d = lo + inv_phi * (hi - lo);
      fd = f(d);
    }
  }
  return fc >= fd ? c : d;
}

}  // namespace detail

/// Rate maximizing net_valuation over [0, x_max] (and x * lambda <= m when the
/// budget cap is on).
///
/// The interval is scanned on a grid of step 1e-3 * x_max; every grid-local
/// maximum is refined by golden-section search inside its bracketing cells,
/// and the best refined point wins. Near-equal values resolve to the smaller x.
inline double best_response(double lambda, const User& user, const UtilityParams& p) {
  if (!(lambda > 0.0)) throw std::domain_error("best_response: price must be positive");
  double hi = user.x_max;
  if (p.budget_cap) hi = std::min(hi, user.budget / lambda);
  if (!(hi > 0.0)) return 0.0;

  auto f = [&](double x) { return net_valuation(x, lambda, user, p); };
  const double h = 1e-3 * user.x_max;
  const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(hi / h - 1e-9)));
  std::vector<double> xs(n + 1);
  std::vector<double> fs(n + 1);
  for (std::size_t i = 0; i <= n; ++i) {
    xs[i] = std::min(hi, static_cast<double>(i) * h);
    fs[i] = f(xs[i]);
  }

  double best_x = 0.0;
  double best_f = fs[0];
  auto consider = [&](double x, double fx) {
    if (fx > best_f + 1e-12 * std::max(1.0, std::abs(best_f))) {
      best_x = x;
      best_f = fx;
    }
  };
  for (std::size_t i = 0; i <= n; ++i) {
    const bool left_ok = i == 0 || fs[i] >= fs[i - 1];
    const bool right_ok = i == n || fs[i] >= fs[i + 1];
    if (!(left_ok && right_ok)) continue;
    if (i == 0 || i == n) {
      // Endpoint maxima still get a one-sided refinement into the adjacent cell.
      const double lo = i == 0 ? xs[0] : xs[n - 1];
      const double up = i == 0 ? xs[std::min<std::size_t>(1, n)] : xs[n];
      const double x = detail::golden_section_max(f, lo, up);
      const double fx = f(x);
      if (fx > fs[i]) {
        consider(x, fx);
      } else {
        consider(xs[i], fs[i]);
      }
      continue;
    }
    const double x = detail::golden_section_max(f, xs[i - 1], xs[i + 1]);
    const double fx = f(x);
    if (fx >= fs[i]) {
      consider(x, fx);
    } else {
      consider(xs[i], fs[i]);
    }
  }
  return best_x;
}

}  // namespace micc
