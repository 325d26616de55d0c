#include "multical/isotonic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "multical/error.hpp"

namespace multical {

std::size_t block_index(const StepFunction& f, double p) {
  const auto it = std::lower_bound(f.knots.begin(), f.knots.end(), p);
  if (it == f.knots.end()) return f.knots.size() - 1;
  return static_cast<std::size_t>(it - f.knots.begin());
}

double step_eval(const StepFunction& f, double p) { return f.values[block_index(f, p)]; }

double StepFunction::operator()(double p) const { return step_eval(*this, p); }

std::vector<double> evaluate(const StepFunction& f, std::span<const double> x) {
  std::vector<double> out(x.size());
  std::transform(x.begin(), x.end(), out.begin(), [&](double p) { return step_eval(f, p); });
  return out;
}

StepFunction weighted_isotonic_fit(std::span<const double> x, std::span<const double> y,
                                   std::span<const double> w) {
  if (x.size() != y.size() || x.size() != w.size()) {
    throw ValidationError("isotonic fit: x, y and w must have equal lengths");
  }
  if (x.empty()) throw DomainError("isotonic fit: empty input");
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (std::isnan(x[i]) || std::isnan(y[i]) || std::isnan(w[i])) {
      throw ValidationError(i, "isotonic fit: NaN input");
    }
    if (!(w[i] > 0.0)) throw ValidationError(i, "isotonic fit: weights must be positive");
  }

  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });

  struct Block {
    double weight;
    double weighted_sum;
    double x_max;
  };
  std::vector<Block> blocks;
  blocks.reserve(x.size());

  auto mean = [](const Block& b) { return b.weighted_sum / b.weight; };

  std::size_t i = 0;
  while (i < order.size()) {
    // Merge tied x into one point.
    const double xv = x[order[i]];
    Block b{0.0, 0.0, xv};
    while (i < order.size() && x[order[i]] == xv) {
      b.weight += w[order[i]];
      b.weighted_sum += w[order[i]] * y[order[i]];
      ++i;
    }
    blocks.push_back(b);
    while (blocks.size() > 1 && mean(blocks[blocks.size() - 2]) >= mean(blocks.back())) {
      Block top = blocks.back();
      blocks.pop_back();
      Block& prev = blocks.back();
      prev.weight += top.weight;
      prev.weighted_sum += top.weighted_sum;
      prev.x_max = top.x_max;
    }
  }

  StepFunction f;
  f.knots.reserve(blocks.size());
  f.values.reserve(blocks.size());
  for (const auto& b : blocks) {
    f.knots.push_back(b.x_max);
    f.values.push_back(mean(b));
  }
  f.domain_min = x[order.front()];
  f.domain_max = x[order.back()];
  return f;
}

}  // namespace multical
