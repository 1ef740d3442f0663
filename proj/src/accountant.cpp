#include "sdplm/accountant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "sdplm/errors.hpp"

namespace sdplm {
namespace {

double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  const double m = std::max(a, b);
  return m + std::log1p(std::exp(std::min(a, b) - m));
}

double log_binom(int64_t n, int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

// Closed-form binomial sum for integer alpha, in log space.
double rdp_integer_order(double q, double sigma, int64_t alpha) {
  const double log_q = std::log(q);
  const double log_1mq = q < 1.0 ? std::log1p(-q) : -std::numeric_limits<double>::infinity();
  double log_sum = -std::numeric_limits<double>::infinity();
  for (int64_t k = 0; k <= alpha; ++k) {
    double term = log_binom(alpha, k) + static_cast<double>(k) * log_q +
                  static_cast<double>(k) * (static_cast<double>(k) - 1.0) /
                      (2.0 * sigma * sigma);
    if (k < alpha) {
      if (q >= 1.0) continue;  // (1-q)^(a-k) is exactly zero
      term += static_cast<double>(alpha - k) * log_1mq;
    }
    log_sum = log_add(log_sum, term);
  }
  return std::max(0.0, log_sum / (static_cast<double>(alpha) - 1.0));
}

// exp(y) of the likelihood ratio of the shifted/unshifted Gaussian mixture,
// in log space: log[(1-q) + q * e^{(2x-1)/(2 sigma^2)}].
double log_mixture_ratio(double x, double q, double sigma) {
  const double shift = (2.0 * x - 1.0) / (2.0 * sigma * sigma);
  if (q >= 1.0) return shift;
  return log_add(std::log1p(-q), std::log(q) + shift);
}

// E_{x ~ N(0, sigma^2)} [ ratio(x)^alpha ], integrated in log space with
// composite Simpson. Used only for fractional orders.
double rdp_fractional_order(double q, double sigma, double alpha) {
  // The integrand is a Gaussian times a ratio that grows like
  // e^{alpha x / sigma^2}; its mass is centered in [0, alpha] with Gaussian
  // tails of width sigma.
  const double lo = -12.0 * sigma - 1.0;
  const double hi = alpha + 12.0 * sigma + 1.0;
  const int n = 20000;  // even
  const double step = (hi - lo) / n;
  const double log_norm = -0.5 * std::log(2.0 * M_PI) - std::log(sigma);
  auto log_f = [&](double x) {
    const double z = x / sigma;
    return log_norm - 0.5 * z * z + alpha * log_mixture_ratio(x, q, sigma);
  };
  double log_sum = -std::numeric_limits<double>::infinity();
  for (int i = 0; i <= n; ++i) {
    const double x = lo + step * static_cast<double>(i);
    const double w = (i == 0 || i == n) ? 1.0 : (i % 2 == 1 ? 4.0 : 2.0);
    log_sum = log_add(log_sum, std::log(w) + log_f(x));
  }
  const double log_integral = log_sum + std::log(step / 3.0);
  return std::max(0.0, log_integral / (alpha - 1.0));
}

}  // namespace

RdpCurve& RdpCurve::operator+=(const RdpCurve& other) {
  if (orders != other.orders) {
    throw AccountingError("accountant: cannot add curves over different orders");
  }
  for (size_t i = 0; i < eps_alpha.size(); ++i) eps_alpha[i] += other.eps_alpha[i];
  return *this;
}

const std::vector<double>& default_orders() {
  static const std::vector<double> kOrders = [] {
    std::vector<double> o = {1.25, 1.5};
    for (int a = 2; a <= 64; ++a) o.push_back(a);
    o.push_back(96);
    o.push_back(128);
    o.push_back(256);
    return o;
  }();
  return kOrders;
}

RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders) {
  if (q < 0.0 || q > 1.0) throw AccountingError("accountant: q must be in [0, 1]");
  if (q > 0.0 && sigma <= 0.0) {
    throw AccountingError("accountant: sigma must be positive when q > 0");
  }
  RdpCurve curve;
  curve.orders = orders;
  curve.eps_alpha.assign(orders.size(), 0.0);
  if (q == 0.0) return curve;
  for (size_t i = 0; i < orders.size(); ++i) {
    const double alpha = orders[i];
    if (alpha <= 1.0) throw AccountingError("accountant: orders must exceed 1");
    const double rounded = std::nearbyint(alpha);
    if (std::abs(alpha - rounded) < 1e-12) {
      curve.eps_alpha[i] = rdp_integer_order(q, sigma, static_cast<int64_t>(rounded));
    } else {
      curve.eps_alpha[i] = rdp_fractional_order(q, sigma, alpha);
    }
  }
  return curve;
}

RdpCurve compose(const PrivacyLedger& ledger, const std::vector<double>& orders) {
  RdpCurve total;
  total.orders = orders;
  total.eps_alpha.assign(orders.size(), 0.0);
  std::map<std::pair<double, double>, int64_t> groups;
  for (const auto& e : ledger.entries) groups[{e.q, e.sigma}] += 1;
  for (const auto& [key, count] : groups) {
    RdpCurve one = rdp_subsampled_gaussian(key.first, key.second, orders);
    for (size_t i = 0; i < total.eps_alpha.size(); ++i) {
      total.eps_alpha[i] += static_cast<double>(count) * one.eps_alpha[i];
    }
  }
  return total;
}

EpsilonResult to_eps_delta(const RdpCurve& curve, double delta) {
  if (curve.orders.empty()) throw AccountingError("accountant: empty curve");
  if (delta <= 0.0 || delta >= 1.0) {
    throw AccountingError("accountant: delta must be in (0, 1)");
  }
  EpsilonResult best;
  best.epsilon = std::numeric_limits<double>::infinity();
  const double log_inv_delta = std::log(1.0 / delta);
  for (size_t i = 0; i < curve.orders.size(); ++i) {
    const double eps = curve.eps_alpha[i] + log_inv_delta / (curve.orders[i] - 1.0);
    if (eps < best.epsilon) {
      best.epsilon = eps;
      best.best_order = curve.orders[i];
    }
  }
  return best;
}

double epsilon_for(double sigma, double q, int64_t steps, double delta,
                   int mechanisms_per_step) {
  if (steps < 0 || mechanisms_per_step < 0) {
    throw AccountingError("accountant: step counts must be non-negative");
  }
  PrivacyLedger ledger;
  // compose() groups identical entries, so a single representative carries
  // the whole count.
  RdpCurve total;
  total.orders = default_orders();
  total.eps_alpha.assign(total.orders.size(), 0.0);
  if (steps > 0 && mechanisms_per_step > 0) {
    RdpCurve one = rdp_subsampled_gaussian(q, sigma, total.orders);
    const double count =
        static_cast<double>(steps) * static_cast<double>(mechanisms_per_step);
    for (size_t i = 0; i < total.eps_alpha.size(); ++i) {
      total.eps_alpha[i] = count * one.eps_alpha[i];
    }
  }
  return to_eps_delta(total, delta).epsilon;
}

}  // namespace sdplm
