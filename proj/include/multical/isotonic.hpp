#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace multical {

// Non-decreasing, right-continuous-from-the-left step function produced by
// isotonic regression. Block k covers (knots[k-1], knots[k]]; evaluation is
// clamped to the first/last block outside the fitted range.
struct StepFunction {
  std::vector<double> knots;
  std::vector<double> values;
  double domain_min = 0.0;
  double domain_max = 0.0;

  std::size_t block_count() const { return values.size(); }
  double operator()(double p) const;
};

// Index of the block that contains `p` (clamped).
std::size_t block_index(const StepFunction& f, double p);

double step_eval(const StepFunction& f, double p);

// Weighted least-squares fit of y on x under a non-decreasing constraint, by
// pool-adjacent-violators. Points with equal x are merged (summed weight,
// weighted-mean response) before pooling, so the result is a function of x.
StepFunction weighted_isotonic_fit(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> w);

// step_eval at every x.
std::vector<double> evaluate(const StepFunction& f, std::span<const double> x);

}  // namespace multical
