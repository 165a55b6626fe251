#include "chi_square_oracle.hpp"

#include <cmath>
#include <numbers>

namespace oracle {

long double chi2_sf_closed_form(long double x, int df) {
  if (x <= 0) return 1.0L;
  const long double h = x / 2;
  if (df % 2 == 0) {
    long double term = 1.0L;
    long double sum = 1.0L;
    for (int j = 1; j < df / 2; ++j) {
      term *= h / j;
      sum += term;
    }
    return std::exp(-h) * sum;
  }
  // Q(j + 1/2, h) = erfc(sqrt h) + e^{-h} sum_{i=1..j} h^{i-1/2} / Gamma(i + 1/2)
  long double sum = 0.0L;
  long double term = std::sqrt(h) / std::tgamma(1.5L);
  for (int i = 1; i <= (df - 1) / 2; ++i) {
    sum += term;
    term *= h / (i + 0.5L);
  }
  return std::erfc(std::sqrt(h)) + std::exp(-h) * sum;
}

long double chi2_cdf_closed_form(long double x, int df) { return 1.0L - chi2_sf_closed_form(x, df); }

long double chi2_cdf_simpson(long double x, int df, int panels) {
  if (x <= 0) return 0.0L;
  if (panels % 2) ++panels;
  const long double k = df / 2.0L;
  const long double log_norm = -k * std::log(2.0L) - std::lgamma(k);
  // density of t at t = u^2, times dt/du = 2u
  auto g = [&](long double u) -> long double {
    if (u == 0) return df == 1 ? 2.0L * std::exp(log_norm) : 0.0L;
    return 2.0L * std::exp(log_norm + (df - 1) * std::log(u) - u * u / 2);
  };
  const long double b = std::sqrt(x);
  const long double step = b / panels;
  long double sum = g(0) + g(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 ? 4.0L : 2.0L) * g(i * step);
  return sum * step / 3;
}

}  // namespace oracle
