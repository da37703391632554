// Bootstrap resampling and paired significance testing over per-item
// correctness records.
#pragma once

#include <cstdint>
#include <vector>

namespace revlab {

struct BootstrapResult {
  std::vector<double> replicate_means;
  double mean = 0;
  double std = 0;  // population convention over replicate means
  int replicates = 0;
  double fraction = 0;
  uint64_t seed = 0;
};

// Each replicate draws round(fraction * n) items uniformly with replacement
// and records the mean.
BootstrapResult bootstrap_accuracy(const std::vector<int>& correctness,
                                   int replicates = 5, double fraction = 0.8,
                                   uint64_t seed = 0);

struct TTestResult {
  double t = 0;  // may be +/-inf for constant nonzero differences
  double p = 1;
};

// Paired two-sided t-test with sample sd (n-1); p via the regularized
// incomplete beta. sd == 0 degenerates to (0, 1) for zero mean difference
// and (+/-inf, 0) otherwise.
TTestResult paired_t_test(const std::vector<double>& a, const std::vector<double>& b);

// I_x(a, b), continued-fraction evaluation.
double regularized_incomplete_beta(double a, double b, double x);

// P(|T_df| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2).
double student_t_two_sided_p(double t, double df);

}  // namespace revlab
