#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace multical {

enum class Degree { constant, linear };

// Nearest-neighbour local regression settings. The bandwidth at a query
// point is the distance to its ceil(alpha * n)-th nearest observation and the
// kernel is tricube. Distances in 2-D use coordinates divided by the scales;
// a zero scale means "estimate from the data".
struct SmoothConfig {
  double alpha = 0.5;
  Degree degree = Degree::linear;
  double scale_p = 0.0;
  double scale_s = 0.0;
  // Cells per axis used by 2-D surface fits to pre-aggregate records; 0 fits
  // on the raw records.
  std::size_t bins_2d = 128;

  void validate() const;
};

// Exposure-weighted standard deviation, falling back to IQR / 1.349 and then
// to 1 for degenerate samples.
double standardization_scale(std::span<const double> values, std::span<const double> weights);

// Linear weights of a local fit at one query: fit = sum weight[k] * y[index[k]].
struct KernelWeights {
  std::vector<std::size_t> index;
  std::vector<double> weight;
};

// Calls fn(j, weights) for every query point of a 1-D local fit.
void for_each_kernel_row_1d(std::span<const double> x, std::span<const double> w,
                            std::span<const double> eval_at, const SmoothConfig& cfg,
                            const std::function<void(std::size_t, const KernelWeights&)>& fn);

// Local (kernel x exposure)-weighted mean (degree constant) or intercept of
// the local weighted least-squares line (degree linear) at each query.
std::vector<double> local_mean_1d(std::span<const double> x, std::span<const double> y,
                                  std::span<const double> w, std::span<const double> eval_at,
                                  const SmoothConfig& cfg);

std::vector<double> local_mean_2d(std::span<const double> p, std::span<const double> s,
                                  std::span<const double> y, std::span<const double> w,
                                  std::span<const double> eval_p, std::span<const double> eval_s,
                                  const SmoothConfig& cfg);

// local_mean_2d on records pre-aggregated into cfg.bins_2d x cfg.bins_2d
// equal-width cells of the standardized plane. Cell moments are exact; the
// kernel weight and the neighbour count are taken per cell at its centroid.
std::vector<double> local_mean_2d_binned(std::span<const double> p, std::span<const double> s,
                                         std::span<const double> y, std::span<const double> w,
                                         std::span<const double> eval_p,
                                         std::span<const double> eval_s, const SmoothConfig& cfg);

// Sum of the exposures of the k nearest records to each record (itself
// included) in standardized (p, s) space. Ties are broken by record index.
std::vector<double> knn_local_exposure(std::span<const double> p, std::span<const double> s,
                                       std::span<const double> w, std::size_t k,
                                       double scale_p = 0.0, double scale_s = 0.0);

// Same sum around arbitrary query points.
std::vector<double> knn_exposure_at(std::span<const double> p, std::span<const double> s,
                                    std::span<const double> w, std::size_t k,
                                    std::span<const double> query_p,
                                    std::span<const double> query_s, double scale_p,
                                    double scale_s);

// Fitted values stored on a tensor grid and interpolated (linear in 1-D,
// bilinear in 2-D). Queries are clamped to the grid range.
struct LocalSurface {
  std::vector<double> grid_p;
  std::vector<double> grid_s;  // empty for a 1-D surface
  std::vector<double> values;  // row-major: values[ip * grid_s.size() + is]
  double scale_p = 1.0;
  double scale_s = 1.0;

  bool two_dimensional() const { return !grid_s.empty(); }
  std::pair<double, double> range_p() const { return {grid_p.front(), grid_p.back()}; }
  std::pair<double, double> range_s() const { return {grid_s.front(), grid_s.back()}; }
  double at(std::size_t ip, std::size_t is = 0) const {
    return values[two_dimensional() ? ip * grid_s.size() + is : ip];
  }
  bool outside(double p, double s = 0.0) const;
  double operator()(double p, double s = 0.0) const;
};

// Grid nodes for one axis: all distinct values when there are at most
// `max_nodes`, else exposure-weighted quantiles j/(max_nodes-1), deduplicated.
// The first and last node are the sample minimum and maximum.
std::vector<double> grid_nodes(std::span<const double> values, std::span<const double> weights,
                               std::size_t max_nodes);

LocalSurface fit_surface_1d(std::span<const double> x, std::span<const double> y,
                            std::span<const double> w, const SmoothConfig& cfg,
                            std::size_t grid_size);

LocalSurface fit_surface_2d(std::span<const double> p, std::span<const double> s,
                            std::span<const double> y, std::span<const double> w,
                            const SmoothConfig& cfg, std::size_t grid_p, std::size_t grid_s);

// Evaluates the surface at every (p_i, s_i); `s` may be empty for 1-D.
std::vector<double> evaluate(const LocalSurface& surface, std::span<const double> p,
                             std::span<const double> s = {});

}  // namespace multical
