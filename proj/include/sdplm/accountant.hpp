#pragma once

#include <cstdint>
#include <vector>

#include "sdplm/ledger.hpp"

namespace sdplm {

// Renyi-DP curve: eps_alpha[i] is the RDP epsilon at order orders[i].
// Curves over the same grid add pointwise under composition.
struct RdpCurve {
  std::vector<double> orders;
  std::vector<double> eps_alpha;

  RdpCurve& operator+=(const RdpCurve& other);
};

// Integer orders 2..64 plus {1.25, 1.5, 96, 128, 256}. Small sigma needs the
// large orders, large sigma the small ones.
const std::vector<double>& default_orders();

// RDP of the subsampled Gaussian mechanism at sampling rate q and noise
// multiplier sigma. Integer orders use the binomial closed form
//   eps(a) = log( sum_{k=0}^{a} C(a,k) (1-q)^{a-k} q^k e^{k(k-1)/(2 sigma^2)} ) / (a-1)
// evaluated in log space; fractional orders integrate the mixture divergence
// numerically. q = 0 yields the zero curve.
RdpCurve rdp_subsampled_gaussian(double q, double sigma,
                                 const std::vector<double>& orders = default_orders());

// Pointwise sum of the per-entry curves. Identical (q, sigma) entries are
// grouped, so cost is independent of ledger length.
RdpCurve compose(const PrivacyLedger& ledger,
                 const std::vector<double>& orders = default_orders());

struct EpsilonResult {
  double epsilon = 0.0;
  double best_order = 0.0;
};

// Standard RDP -> (eps, delta) conversion:
//   eps = min over orders of [ eps(alpha) + log(1/delta) / (alpha - 1) ].
EpsilonResult to_eps_delta(const RdpCurve& curve, double delta);

// Convenience wrapper over a synthetic uniform ledger.
double epsilon_for(double sigma, double q, int64_t steps, double delta,
                   int mechanisms_per_step = 1);

}  // namespace sdplm
