#pragma once

#include <cmath>
#include <vector>

namespace ndsq::testing {

/// Upper regularized incomplete gamma Q(a, x), by series / continued fraction.
inline double gamma_q(double a, double x) {
  if (x <= 0 || a <= 0) return 1.0;
  if (x < a + 1.0) {
    double ap = a, sum = 1.0 / a, del = sum;
    for (int n = 0; n < 500; ++n) {
      ap += 1;
      del *= x / ap;
      sum += del;
      if (std::abs(del) < std::abs(sum) * 1e-14) break;
    }
    return 1.0 - sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  double b = x + 1 - a, c = 1e300, d = 1 / b, h = d;
  for (int i = 1; i <= 500; ++i) {
    const double an = -i * (i - a);
    b += 2;
    d = an * d + b;
    if (std::abs(d) < 1e-300) d = 1e-300;
    c = b + an / c;
    if (std::abs(c) < 1e-300) c = 1e-300;
    d = 1 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < 1e-14) break;
  }
  return h * std::exp(-x + a * std::log(x) - std::lgamma(a));
}

inline double chi_square_p(const std::vector<long>& counts, double expected_each) {
  double stat = 0;
  for (long c : counts) {
    const double d = c - expected_each;
    stat += d * d / expected_each;
  }
  return gamma_q((counts.size() - 1) / 2.0, stat / 2.0);
}

}  // namespace ndsq::testing
