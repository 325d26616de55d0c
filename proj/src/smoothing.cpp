#include "multical/smoothing.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>

#include <Eigen/Dense>
#include <fmt/format.h>

#include "multical/error.hpp"

namespace multical {

namespace {

double tricube(double u) {
  if (u >= 1.0) return 0.0;
  const double t = 1.0 - u * u * u;
  return t * t * t;
}

void check_inputs(std::size_t n, std::size_t y, std::size_t w, const char* what) {
  if (n != y || n != w) throw ValidationError(fmt::format("{}: inputs differ in length", what));
  if (n == 0) throw DomainError(fmt::format("{}: no data", what));
}

void check_weights(std::span<const double> w) {
  for (std::size_t i = 0; i < w.size(); ++i) {
    if (!(w[i] > 0.0) || !std::isfinite(w[i])) {
      throw ValidationError(i, "smoothing weights must be positive and finite");
    }
  }
}

std::size_t neighbour_count(double alpha, std::size_t n) {
  const auto q = static_cast<std::size_t>(std::ceil(alpha * static_cast<double>(n) - 1e-12));
  if (q < 2 && n >= 2) {
    throw DomainError(fmt::format("neighbourhood of {} points is too small (alpha={}, n={})", q,
                                  alpha, n));
  }
  return std::clamp<std::size_t>(q, 1, n);
}

// Scratch space reused across query points.
struct Workspace {
  std::vector<double> dist2;
  std::vector<double> select;
};

// Exact q-th smallest of `d2` (1-based): a bucket histogram narrows the
// search to one bucket, which is then partially sorted.
double kth_smallest(const std::vector<double>& d2, std::size_t q, std::vector<double>& scratch) {
  const std::size_t n = d2.size();
  auto select = [&](std::size_t r) {
    std::nth_element(scratch.begin(), scratch.begin() + static_cast<std::ptrdiff_t>(r),
                     scratch.end());
    return scratch[r];
  };
  if (n <= 4096) {
    scratch.assign(d2.begin(), d2.end());
    return select(q - 1);
  }
  const double top = *std::max_element(d2.begin(), d2.end());
  if (!(top > 0.0)) return 0.0;
  constexpr std::size_t B = 4096;
  const double scale = static_cast<double>(B) / top;
  std::array<std::uint32_t, B + 1> counts{};
  for (double v : d2) ++counts[static_cast<std::size_t>(v * scale)];
  std::size_t seen = 0, bucket = 0;
  while (seen + counts[bucket] < q) seen += counts[bucket++];
  scratch.clear();
  for (double v : d2) {
    if (static_cast<std::size_t>(v * scale) == bucket) scratch.push_back(v);
  }
  return select(q - seen - 1);
}

// Solves the local least-squares problem from kernel moments about the
// query (coordinates divided by h): s0 = sum k, su = sum k u, suu = sum k u u',
// sy = sum k y, suy = sum k u y. Returns the fitted value at the query.
template <std::size_t D>
double solve_local(double s0, const Eigen::Matrix<double, D, 1>& su,
                   const Eigen::Matrix<double, D, D>& suu, double sy,
                   const Eigen::Matrix<double, D, 1>& suy) {
  const double ybar = sy / s0;
  const Eigen::Matrix<double, D, 1> mean = su / s0;
  const Eigen::Matrix<double, D, D> cov = suu / s0 - mean * mean.transpose();
  const Eigen::Matrix<double, D, 1> cross = suy / s0 - mean * ybar;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> eig(cov);
  const auto& values = eig.eigenvalues();
  const double top = values.maxCoeff();
  double fit = ybar;
  for (std::size_t j = 0; j < D; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (values[jj] > 1e-10 * top && values[jj] > 1e-14) {
      const auto v = eig.eigenvectors().col(jj);
      fit += v.dot(cross) * v.dot(-mean) / values[jj];
    }
  }
  return fit;
}

// Local fit at one query. `coords` holds D coordinate arrays already divided
// by their scales.
template <std::size_t D>
double local_fit(const std::array<std::span<const double>, D>& coords,
                 const std::array<double, D>& query, std::span<const double> y,
                 std::span<const double> w, std::size_t q, Degree degree, Workspace& ws) {
  const std::size_t n = w.size();
  ws.dist2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      const double diff = coords[k][i] - query[k];
      d += diff * diff;
    }
    ws.dist2[i] = d;
  }
  const double h2 = kth_smallest(ws.dist2, q, ws.select);
  if (!(h2 > 0.0)) {
    // Only exact duplicates of the query in the neighbourhood.
    double sw = 0.0, sy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (ws.dist2[i] == 0.0) {
        sw += w[i];
        sy += w[i] * y[i];
      }
    }
    return sy / sw;
  }
  const double inv_h = 1.0 / std::sqrt(h2);
  double s0 = 0.0, sy = 0.0;
  std::array<double, D> su{}, suy{};
  std::array<double, D * D> suu{};
  const bool linear = degree == Degree::linear;
  const double* dist = ws.dist2.data();
  if (!linear) {
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] >= h2) continue;
      const double kw = tricube(std::sqrt(dist[i]) * inv_h) * w[i];
      s0 += kw;
      sy += kw * y[i];
    }
  } else if constexpr (D == 1) {
    const double* x = coords[0].data();
    const double q0 = query[0];
    double a1 = 0.0, a2 = 0.0, ay = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] >= h2) continue;
      const double kw = tricube(std::sqrt(dist[i]) * inv_h) * w[i];
      const double u = (x[i] - q0) * inv_h;
      s0 += kw;
      sy += kw * y[i];
      a1 += kw * u;
      a2 += kw * u * u;
      ay += kw * u * y[i];
    }
    su[0] = a1;
    suu[0] = a2;
    suy[0] = ay;
  } else {
    const double* x0 = coords[0].data();
    const double* x1 = coords[1].data();
    const double q0 = query[0], q1 = query[1];
    double a0 = 0.0, a1 = 0.0, b00 = 0.0, b01 = 0.0, b11 = 0.0, c0 = 0.0, c1 = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (dist[i] >= h2) continue;
      const double kw = tricube(std::sqrt(dist[i]) * inv_h) * w[i];
      const double u = (x0[i] - q0) * inv_h;
      const double v = (x1[i] - q1) * inv_h;
      const double ky = kw * y[i];
      s0 += kw;
      sy += ky;
      a0 += kw * u;
      a1 += kw * v;
      b00 += kw * u * u;
      b01 += kw * u * v;
      b11 += kw * v * v;
      c0 += ky * u;
      c1 += ky * v;
    }
    su = {a0, a1};
    suu = {b00, b01, b01, b11};
    suy = {c0, c1};
  }
  if (!(s0 > 0.0)) {
    const auto nearest = static_cast<std::size_t>(
        std::min_element(ws.dist2.begin(), ws.dist2.end()) - ws.dist2.begin());
    return y[nearest];
  }
  if (!linear) return sy / s0;
  Eigen::Matrix<double, D, 1> esu, esuy;
  Eigen::Matrix<double, D, D> esuu;
  for (std::size_t j = 0; j < D; ++j) {
    esu[j] = su[j];
    esuy[j] = suy[j];
    for (std::size_t k = 0; k < D; ++k) esuu(j, k) = suu[j * D + k];
  }
  return solve_local<D>(s0, esu, esuu, sy, esuy);
}

// Equivalent-kernel weights at one query: fit = sum_k row.weight[k] *
// y[row.index[k]]. `coords` holds D coordinate arrays already divided by
// their scales.
template <std::size_t D>
void kernel_row(const std::array<std::span<const double>, D>& coords,
                const std::array<double, D>& query, std::span<const double> w, std::size_t q,
                Degree degree, Workspace& ws, KernelWeights& row) {
  const std::size_t n = w.size();
  row.index.clear();
  row.weight.clear();
  ws.dist2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double d = 0.0;
    for (std::size_t k = 0; k < D; ++k) {
      const double diff = coords[k][i] - query[k];
      d += diff * diff;
    }
    ws.dist2[i] = d;
  }
  const double h2 = kth_smallest(ws.dist2, q, ws.select);
  const double h = std::sqrt(h2);

  double sw = 0.0;
  std::array<double, D> su{};
  for (std::size_t i = 0; i < n; ++i) {
    const double d2 = ws.dist2[i];
    double k;
    if (h > 0.0) {
      if (d2 >= h2) continue;
      k = tricube(std::sqrt(d2) / h);
    } else {
      if (d2 > 0.0) continue;
      k = 1.0;
    }
    const double kw = k * w[i];
    if (kw == 0.0) continue;
    row.index.push_back(i);
    row.weight.push_back(kw);
    sw += kw;
    for (std::size_t j = 0; j < D; ++j) su[j] += kw * (coords[j][i] - query[j]);
  }
  if (!(sw > 0.0)) {
    const auto nearest = static_cast<std::size_t>(
        std::min_element(ws.dist2.begin(), ws.dist2.end()) - ws.dist2.begin());
    row.index.assign(1, nearest);
    row.weight.assign(1, 1.0);
    return;
  }
  for (double& v : row.weight) v /= sw;
  if (degree == Degree::constant || h == 0.0) return;

  // Local least squares in coordinates centred at the local mean m. With
  // u_i = (x_i - q - m) / h and V = sum l_i u_i u_i', the fit at the query is
  // sum l_i (1 + u_q' V^+ u_i) y_i where u_q = -m / h.
  Eigen::Matrix<double, D, 1> mean;
  for (std::size_t j = 0; j < D; ++j) mean[j] = su[j] / sw;
  Eigen::Matrix<double, D, D> cov = Eigen::Matrix<double, D, D>::Zero();
  auto centred = [&](std::size_t i) {
    Eigen::Matrix<double, D, 1> u;
    for (std::size_t j = 0; j < D; ++j) u[j] = (coords[j][i] - query[j] - mean[j]) / h;
    return u;
  };
  for (std::size_t k = 0; k < row.index.size(); ++k) {
    const auto u = centred(row.index[k]);
    cov.noalias() += row.weight[k] * u * u.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix<double, D, D>> eig(cov);
  const auto& values = eig.eigenvalues();
  const double top = values.maxCoeff();
  const Eigen::Matrix<double, D, 1> uq = -mean / h;
  Eigen::Matrix<double, D, 1> g = Eigen::Matrix<double, D, 1>::Zero();
  for (std::size_t j = 0; j < D; ++j) {
    const auto jj = static_cast<Eigen::Index>(j);
    if (values[jj] > 1e-10 * top && values[jj] > 1e-14) {
      const auto v = eig.eigenvectors().col(jj);
      g += v * (v.dot(uq) / values[jj]);
    }
  }
  for (std::size_t k = 0; k < row.index.size(); ++k) {
    row.weight[k] *= 1.0 + g.dot(centred(row.index[k]));
  }
}

std::vector<double> scaled(std::span<const double> v, double scale) {
  std::vector<double> out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] = v[i] / scale;
  return out;
}

double resolve_scale(double configured, std::span<const double> v, std::span<const double> w) {
  return configured > 0.0 ? configured : standardization_scale(v, w);
}

// Exposure sum over the k nearest points to one query (ties by index).
double knn_sum(std::span<const double> p, std::span<const double> s, std::span<const double> w,
               std::size_t k, double qp, double qs, Workspace& ws) {
  const std::size_t n = p.size();
  ws.dist2.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double dp = p[i] - qp;
    const double ds = s[i] - qs;
    ws.dist2[i] = dp * dp + ds * ds;
  }
  const double h2 = kth_smallest(ws.dist2, k, ws.select);
  double total = 0.0;
  std::size_t taken = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (ws.dist2[i] < h2) {
      total += w[i];
      ++taken;
    }
  }
  for (std::size_t i = 0; i < n && taken < k; ++i) {
    if (ws.dist2[i] == h2) {
      total += w[i];
      ++taken;
    }
  }
  return total;
}

// Records aggregated into an equal-width grid of cells in standardized
// coordinates. Each cell keeps its exposure, exposure-weighted centroid,
// second moments about the centroid and response sums, so local fits only
// approximate the kernel weight (taken at the centroid).
struct BinnedCloud {
  std::vector<double> count, w, cx, cy, cxx, cxy, cyy, wz, cxz, cyz;
  std::size_t size() const { return w.size(); }
};

BinnedCloud bin_cloud(std::span<const double> x, std::span<const double> y,
                      std::span<const double> z, std::span<const double> w, std::size_t bins) {
  const std::size_t n = x.size();
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  const double wx = (*xmax - *xmin) / static_cast<double>(bins);
  const double wy = (*ymax - *ymin) / static_cast<double>(bins);
  auto cell_of = [&](double v, double lo, double width) -> std::size_t {
    if (!(width > 0.0)) return 0;
    return std::min(bins - 1, static_cast<std::size_t>((v - lo) / width));
  };
  std::vector<std::int32_t> slot(bins * bins, -1);
  std::vector<std::size_t> cell(n);
  BinnedCloud c;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t key = cell_of(x[i], *xmin, wx) * bins + cell_of(y[i], *ymin, wy);
    if (slot[key] < 0) {
      slot[key] = static_cast<std::int32_t>(c.w.size());
      for (auto* v : {&c.count, &c.w, &c.cx, &c.cy, &c.cxx, &c.cxy, &c.cyy, &c.wz, &c.cxz, &c.cyz}) {
        v->push_back(0.0);
      }
    }
    cell[i] = static_cast<std::size_t>(slot[key]);
    const std::size_t j = cell[i];
    c.count[j] += 1.0;
    c.w[j] += w[i];
    c.cx[j] += w[i] * x[i];
    c.cy[j] += w[i] * y[i];
    c.wz[j] += w[i] * z[i];
  }
  for (std::size_t j = 0; j < c.size(); ++j) {
    c.cx[j] /= c.w[j];
    c.cy[j] /= c.w[j];
  }
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t j = cell[i];
    const double dx = x[i] - c.cx[j];
    const double dy = y[i] - c.cy[j];
    c.cxx[j] += w[i] * dx * dx;
    c.cxy[j] += w[i] * dx * dy;
    c.cyy[j] += w[i] * dy * dy;
    c.cxz[j] += w[i] * dx * z[i];
    c.cyz[j] += w[i] * dy * z[i];
  }
  return c;
}

// Bandwidth: centroid distance of the cell holding the q-th nearest record.
double binned_fit(const BinnedCloud& c, double qx, double qy, std::size_t q, Degree degree,
                  Workspace& ws, std::vector<std::size_t>& order) {
  const std::size_t m = c.size();
  ws.dist2.resize(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double dx = c.cx[j] - qx;
    const double dy = c.cy[j] - qy;
    ws.dist2[j] = dx * dx + dy * dy;
  }
  order.resize(m);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Partial selection by distance, then a sort of the short prefix that
  // must hold the q-th record.
  double h2 = 0.0;
  {
    std::size_t lo = 0, hi = m;
    double need = static_cast<double>(q);
    auto less = [&](std::size_t a, std::size_t b) {
      return ws.dist2[a] < ws.dist2[b] || (ws.dist2[a] == ws.dist2[b] && a < b);
    };
    // Narrow [lo, hi) until it is short, keeping the target inside.
    while (hi - lo > 64) {
      const std::size_t mid = lo + (hi - lo) / 2;
      std::nth_element(order.begin() + static_cast<std::ptrdiff_t>(lo),
                       order.begin() + static_cast<std::ptrdiff_t>(mid),
                       order.begin() + static_cast<std::ptrdiff_t>(hi), less);
      double left = 0.0;
      for (std::size_t j = lo; j < mid; ++j) left += c.count[order[j]];
      if (left >= need) {
        hi = mid;
      } else {
        need -= left;
        lo = mid;
      }
    }
    std::sort(order.begin() + static_cast<std::ptrdiff_t>(lo),
              order.begin() + static_cast<std::ptrdiff_t>(hi), less);
    for (std::size_t j = lo; j < hi; ++j) {
      need -= c.count[order[j]];
      if (need <= 0.0) {
        h2 = ws.dist2[order[j]];
        break;
      }
    }
  }

  double s0 = 0.0, sy = 0.0;
  double a0 = 0.0, a1 = 0.0, b00 = 0.0, b01 = 0.0, b11 = 0.0, c0 = 0.0, c1 = 0.0;
  if (!(h2 > 0.0)) {
    for (std::size_t j = 0; j < m; ++j) {
      if (ws.dist2[j] == 0.0) {
        s0 += c.w[j];
        sy += c.wz[j];
      }
    }
    return sy / s0;
  }
  const double h = std::sqrt(h2);
  const double inv_h = 1.0 / h;
  const bool linear = degree == Degree::linear;
  for (std::size_t j = 0; j < m; ++j) {
    if (ws.dist2[j] >= h2) continue;
    const double k = tricube(std::sqrt(ws.dist2[j]) * inv_h);
    s0 += k * c.w[j];
    sy += k * c.wz[j];
    if (linear) {
      const double dx = c.cx[j] - qx;
      const double dy = c.cy[j] - qy;
      a0 += k * c.w[j] * dx;
      a1 += k * c.w[j] * dy;
      b00 += k * (c.cxx[j] + c.w[j] * dx * dx);
      b01 += k * (c.cxy[j] + c.w[j] * dx * dy);
      b11 += k * (c.cyy[j] + c.w[j] * dy * dy);
      c0 += k * (c.cxz[j] + dx * c.wz[j]);
      c1 += k * (c.cyz[j] + dy * c.wz[j]);
    }
  }
  if (!(s0 > 0.0)) {
    const auto nearest = static_cast<std::size_t>(
        std::min_element(ws.dist2.begin(), ws.dist2.end()) - ws.dist2.begin());
    return c.wz[nearest] / c.w[nearest];
  }
  if (!linear) return sy / s0;
  Eigen::Vector2d su(a0 * inv_h, a1 * inv_h);
  Eigen::Matrix2d suu;
  suu << b00 * inv_h * inv_h, b01 * inv_h * inv_h, b01 * inv_h * inv_h, b11 * inv_h * inv_h;
  Eigen::Vector2d suy(c0 * inv_h, c1 * inv_h);
  return solve_local<2>(s0, su, suu, sy, suy);
}

double interpolate(std::span<const double> grid, double x, std::size_t& index) {
  if (grid.size() == 1) {
    index = 0;
    return 0.0;
  }
  x = std::clamp(x, grid.front(), grid.back());
  auto it = std::upper_bound(grid.begin(), grid.end(), x);
  std::size_t i = it == grid.begin() ? 0 : static_cast<std::size_t>(it - grid.begin()) - 1;
  i = std::min(i, grid.size() - 2);
  index = i;
  return (x - grid[i]) / (grid[i + 1] - grid[i]);
}

}  // namespace

void SmoothConfig::validate() const {
  if (!(alpha > 0.0 && alpha <= 1.0)) {
    throw ConfigError(fmt::format("alpha must lie in (0, 1], got {}", alpha));
  }
  if (scale_p < 0.0 || scale_s < 0.0 || !std::isfinite(scale_p) || !std::isfinite(scale_s)) {
    throw ConfigError("smoothing scales must be positive (or 0 for data-driven)");
  }
}

double standardization_scale(std::span<const double> values, std::span<const double> weights) {
  if (values.size() != weights.size() || values.empty()) {
    throw ValidationError("standardization_scale: inputs differ in length or are empty");
  }
  double sw = 0.0, sx = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    sw += weights[i];
    sx += weights[i] * values[i];
  }
  const double mean = sx / sw;
  double ss = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    ss += weights[i] * (values[i] - mean) * (values[i] - mean);
  }
  const double sd = std::sqrt(ss / sw);
  if (sd > 0.0) return sd;

  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  auto at = [&](double f) { return sorted[static_cast<std::size_t>(f * (sorted.size() - 1))]; };
  const double iqr = at(0.75) - at(0.25);
  return iqr > 0.0 ? iqr / 1.349 : 1.0;
}

void for_each_kernel_row_1d(std::span<const double> x, std::span<const double> w,
                            std::span<const double> eval_at, const SmoothConfig& cfg,
                            const std::function<void(std::size_t, const KernelWeights&)>& fn) {
  cfg.validate();
  if (x.size() != w.size()) throw ValidationError("smoothing inputs differ in length");
  if (x.empty()) throw DomainError("smoothing: no data");
  check_weights(w);
  const std::size_t q = neighbour_count(cfg.alpha, x.size());
  const std::array<std::span<const double>, 1> coords{x};
  Workspace ws;
  KernelWeights row;
  for (std::size_t j = 0; j < eval_at.size(); ++j) {
    kernel_row<1>(coords, {eval_at[j]}, w, q, cfg.degree, ws, row);
    fn(j, row);
  }
}

std::vector<double> local_mean_1d(std::span<const double> x, std::span<const double> y,
                                  std::span<const double> w, std::span<const double> eval_at,
                                  const SmoothConfig& cfg) {
  check_inputs(x.size(), y.size(), w.size(), "local_mean_1d");
  cfg.validate();
  check_weights(w);
  const std::size_t q = neighbour_count(cfg.alpha, x.size());
  const std::array<std::span<const double>, 1> coords{x};
  Workspace ws;
  std::vector<double> out(eval_at.size());
  for (std::size_t j = 0; j < eval_at.size(); ++j) {
    out[j] = local_fit<1>(coords, {eval_at[j]}, y, w, q, cfg.degree, ws);
  }
  return out;
}

std::vector<double> local_mean_2d(std::span<const double> p, std::span<const double> s,
                                  std::span<const double> y, std::span<const double> w,
                                  std::span<const double> eval_p, std::span<const double> eval_s,
                                  const SmoothConfig& cfg) {
  cfg.validate();
  check_inputs(p.size(), y.size(), w.size(), "local_mean_2d");
  if (s.size() != p.size()) throw ValidationError("local_mean_2d: inputs differ in length");
  if (eval_p.size() != eval_s.size()) throw ValidationError("local_mean_2d: query lengths differ");
  check_weights(w);
  const std::size_t q = neighbour_count(cfg.alpha, p.size());
  const double sp = resolve_scale(cfg.scale_p, p, w);
  const double ss = resolve_scale(cfg.scale_s, s, w);
  const auto ps = scaled(p, sp);
  const auto sv = scaled(s, ss);
  const std::array<std::span<const double>, 2> coords{ps, sv};
  Workspace ws;
  std::vector<double> out(eval_p.size());
  for (std::size_t j = 0; j < eval_p.size(); ++j) {
    out[j] = local_fit<2>(coords, {eval_p[j] / sp, eval_s[j] / ss}, y, w, q, cfg.degree, ws);
  }
  return out;
}

std::vector<double> local_mean_2d_binned(std::span<const double> p, std::span<const double> s,
                                         std::span<const double> y, std::span<const double> w,
                                         std::span<const double> eval_p,
                                         std::span<const double> eval_s, const SmoothConfig& cfg) {
  cfg.validate();
  check_inputs(p.size(), y.size(), w.size(), "local_mean_2d_binned");
  if (s.size() != p.size()) throw ValidationError("local_mean_2d_binned: inputs differ in length");
  if (eval_p.size() != eval_s.size()) throw ValidationError("local_mean_2d_binned: query lengths differ");
  if (cfg.bins_2d < 1) throw ConfigError("binned smoothing needs at least one bin per axis");
  check_weights(w);
  const std::size_t q = neighbour_count(cfg.alpha, p.size());
  const double sp = resolve_scale(cfg.scale_p, p, w);
  const double ss = resolve_scale(cfg.scale_s, s, w);
  const auto cloud = bin_cloud(scaled(p, sp), scaled(s, ss), y, w, cfg.bins_2d);
  Workspace ws;
  std::vector<std::size_t> order;
  std::vector<double> out(eval_p.size());
  for (std::size_t j = 0; j < eval_p.size(); ++j) {
    out[j] = binned_fit(cloud, eval_p[j] / sp, eval_s[j] / ss, q, cfg.degree, ws, order);
  }
  return out;
}

std::vector<double> knn_local_exposure(std::span<const double> p, std::span<const double> s,
                                       std::span<const double> w, std::size_t k, double scale_p,
                                       double scale_s) {
  return knn_exposure_at(p, s, w, k, p, s, scale_p, scale_s);
}

std::vector<double> knn_exposure_at(std::span<const double> p, std::span<const double> s,
                                    std::span<const double> w, std::size_t k,
                                    std::span<const double> query_p,
                                    std::span<const double> query_s, double scale_p,
                                    double scale_s) {
  check_inputs(p.size(), s.size(), w.size(), "knn_local_exposure");
  if (query_p.size() != query_s.size()) throw ValidationError("knn query lengths differ");
  if (k < 1 || k > p.size()) {
    throw ConfigError(fmt::format("knn k must lie in [1, {}], got {}", p.size(), k));
  }
  const double sp = resolve_scale(scale_p, p, w);
  const double ss = resolve_scale(scale_s, s, w);
  const auto ps = scaled(p, sp);
  const auto sv = scaled(s, ss);
  Workspace ws;
  std::vector<double> out(query_p.size());
  for (std::size_t j = 0; j < query_p.size(); ++j) {
    out[j] = knn_sum(ps, sv, w, k, query_p[j] / sp, query_s[j] / ss, ws);
  }
  return out;
}

bool LocalSurface::outside(double p, double s) const {
  if (p < grid_p.front() || p > grid_p.back()) return true;
  return two_dimensional() && (s < grid_s.front() || s > grid_s.back());
}

double LocalSurface::operator()(double p, double s) const {
  std::size_t ip = 0;
  const double tp = interpolate(grid_p, p, ip);
  if (!two_dimensional()) {
    if (grid_p.size() == 1) return values[0];
    return (1.0 - tp) * values[ip] + tp * values[ip + 1];
  }
  std::size_t is = 0;
  const double ts = interpolate(grid_s, s, is);
  const std::size_t ns = grid_s.size();
  const std::size_t ip1 = grid_p.size() == 1 ? ip : ip + 1;
  const std::size_t is1 = ns == 1 ? is : is + 1;
  const double v00 = values[ip * ns + is];
  const double v01 = values[ip * ns + is1];
  const double v10 = values[ip1 * ns + is];
  const double v11 = values[ip1 * ns + is1];
  const double a = (1.0 - ts) * v00 + ts * v01;
  const double b = (1.0 - ts) * v10 + ts * v11;
  return (1.0 - tp) * a + tp * b;
}

std::vector<double> grid_nodes(std::span<const double> values, std::span<const double> weights,
                               std::size_t max_nodes) {
  if (values.size() != weights.size() || values.empty()) {
    throw ValidationError("grid_nodes: inputs differ in length or are empty");
  }
  if (max_nodes < 2) throw ConfigError("a surface grid needs at least 2 nodes per axis");
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });

  std::vector<double> distinct;
  std::vector<double> cum;  // cumulative weight up to and including each distinct value
  double total = 0.0;
  for (std::size_t i : order) {
    total += weights[i];
    if (distinct.empty() || values[i] != distinct.back()) {
      distinct.push_back(values[i]);
      cum.push_back(total);
    } else {
      cum.back() = total;
    }
  }
  if (distinct.size() <= max_nodes) return distinct;

  std::vector<double> nodes{distinct.front()};
  std::size_t pos = 0;
  for (std::size_t j = 1; j + 1 < max_nodes; ++j) {
    const double target = total * static_cast<double>(j) / static_cast<double>(max_nodes - 1);
    while (pos + 1 < distinct.size() && cum[pos] < target) ++pos;
    if (distinct[pos] > nodes.back()) nodes.push_back(distinct[pos]);
  }
  if (distinct.back() > nodes.back()) nodes.push_back(distinct.back());
  return nodes;
}

LocalSurface fit_surface_1d(std::span<const double> x, std::span<const double> y,
                            std::span<const double> w, const SmoothConfig& cfg,
                            std::size_t grid_size) {
  LocalSurface surface;
  surface.grid_p = grid_nodes(x, w, grid_size);
  surface.values = local_mean_1d(x, y, w, surface.grid_p, cfg);
  return surface;
}

LocalSurface fit_surface_2d(std::span<const double> p, std::span<const double> s,
                            std::span<const double> y, std::span<const double> w,
                            const SmoothConfig& cfg, std::size_t grid_p, std::size_t grid_s) {
  LocalSurface surface;
  surface.grid_p = grid_nodes(p, w, grid_p);
  surface.grid_s = grid_nodes(s, w, grid_s);
  surface.scale_p = resolve_scale(cfg.scale_p, p, w);
  surface.scale_s = resolve_scale(cfg.scale_s, s, w);
  SmoothConfig fixed = cfg;
  fixed.scale_p = surface.scale_p;
  fixed.scale_s = surface.scale_s;

  std::vector<double> qp, qs;
  qp.reserve(surface.grid_p.size() * surface.grid_s.size());
  qs.reserve(qp.capacity());
  for (double a : surface.grid_p) {
    for (double b : surface.grid_s) {
      qp.push_back(a);
      qs.push_back(b);
    }
  }
  if (cfg.bins_2d == 0) {
    surface.values = local_mean_2d(p, s, y, w, qp, qs, fixed);
    return surface;
  }
  surface.values = local_mean_2d_binned(p, s, y, w, qp, qs, fixed);
  return surface;
}

std::vector<double> evaluate(const LocalSurface& surface, std::span<const double> p,
                             std::span<const double> s) {
  if (surface.two_dimensional() && s.size() != p.size()) {
    throw ValidationError("2-D surface evaluation needs one s per premium");
  }
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    out[i] = surface.two_dimensional() ? surface(p[i], s[i]) : surface(p[i]);
  }
  return out;
}

}  // namespace multical
