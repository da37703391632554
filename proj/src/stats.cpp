#include "revlab/stats.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "revlab/rng.hpp"

namespace revlab {

BootstrapResult bootstrap_accuracy(const std::vector<int>& correctness, int replicates,
                                   double fraction, uint64_t seed) {
  if (correctness.empty()) throw std::invalid_argument("empty correctness vector");
  if (fraction <= 0 || fraction > 1) throw std::invalid_argument("fraction must be in (0,1]");
  if (replicates < 1) throw std::invalid_argument("replicates must be >= 1");

  const size_t n = correctness.size();
  const int64_t draws = std::max<int64_t>(1, std::llround(fraction * static_cast<double>(n)));
  auto rng = make_rng(seed, "bootstrap");

  BootstrapResult result;
  result.replicates = replicates;
  result.fraction = fraction;
  result.seed = seed;
  result.replicate_means.reserve(replicates);
  for (int rep = 0; rep < replicates; ++rep) {
    int64_t hits = 0;
    for (int64_t i = 0; i < draws; ++i) hits += correctness[uniform_below(rng, n)];
    result.replicate_means.push_back(static_cast<double>(hits) / draws);
  }
  double sum = 0;
  for (double v : result.replicate_means) sum += v;
  result.mean = sum / replicates;
  double sq = 0;
  for (double v : result.replicate_means) sq += (v - result.mean) * (v - result.mean);
  result.std = std::sqrt(sq / replicates);
  return result;
}

namespace {

// Lentz's continued fraction for the incomplete beta, as in Numerical Recipes.
double betacf(double a, double b, double x) {
  constexpr int kMaxIter = 300;
  constexpr double kEps = 1e-15;
  constexpr double kTiny = 1e-300;
  double qab = a + b, qap = a + 1, qam = a - 1;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw std::runtime_error("incomplete beta continued fraction did not converge");
}

}  // namespace

double regularized_incomplete_beta(double a, double b, double x) {
  if (!(a > 0) || !(b > 0)) throw std::invalid_argument("beta parameters must be positive");
  if (x < 0 || x > 1) throw std::invalid_argument("x must be in [0,1]");
  if (x == 0) return 0;
  if (x == 1) return 1;
  double lnfront = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) +
                   a * std::log(x) + b * std::log1p(-x);
  if (x < (a + 1) / (a + b + 2))
    return std::exp(lnfront) * betacf(a, b, x) / a;
  return 1.0 - std::exp(lnfront) * betacf(b, a, 1 - x) / b;
}

double student_t_two_sided_p(double t, double df) {
  if (df <= 0) throw std::invalid_argument("df must be positive");
  if (std::isinf(t)) return 0;
  return regularized_incomplete_beta(df / 2, 0.5, df / (df + t * t));
}

TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("paired vectors differ in length");
  const size_t n = a.size();
  if (n < 2) throw std::invalid_argument("paired t-test needs n >= 2");

  double mean = 0;
  for (size_t i = 0; i < n; ++i) mean += a[i] - b[i];
  mean /= static_cast<double>(n);
  double ss = 0;
  for (size_t i = 0; i < n; ++i) {
    double d = (a[i] - b[i]) - mean;
    ss += d * d;
  }
  double sd = std::sqrt(ss / static_cast<double>(n - 1));
  if (sd == 0) {
    if (mean == 0) return {0.0, 1.0};
    double inf = std::numeric_limits<double>::infinity();
    return {mean > 0 ? inf : -inf, 0.0};
  }
  double t = mean / (sd / std::sqrt(static_cast<double>(n)));
  return {t, student_t_two_sided_p(t, static_cast<double>(n - 1))};
}

}  // namespace revlab
