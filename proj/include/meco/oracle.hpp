#ifndef MECO_ORACLE_HPP
#define MECO_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "meco/delay.hpp"
#include "meco/error.hpp"
#include "meco/scenario.hpp"
#include "meco/subgradient.hpp"

// Brute-force verifiers. Nothing here is used by the solvers themselves.
namespace meco::oracle {

/// Uniform grid of `resolution` intervals over [lo, hi].
struct GridSpec {
  std::size_t resolution = 100'000;
  double lo = 0.0;
  double hi = 1.0;

  void validate() const {
    if (resolution < 2) throw ValidationError("grid resolution must be >= 2");
    if (!(hi > lo)) throw ValidationError("grid bounds must satisfy lo < hi");
  }
  double step() const { return (hi - lo) / static_cast<double>(resolution); }
  double at(std::size_t i) const { return i == resolution ? hi : lo + step() * static_cast<double>(i); }
};

/// Total pipelined delay at every grid value of lambda.
inline std::vector<double> lambda_profile(const DeviceProfile& dev, double beta, double t, double vc,
                                          const GridSpec& grid = {}) {
  grid.validate();
  std::vector<double> out(grid.resolution + 1);
  for (std::size_t i = 0; i <= grid.resolution; ++i)
    out[i] = partial_delay(dev, beta, t, vc, grid.at(i)).total.value_or_inf();
  return out;
}

struct LambdaGridResult {
  double lambda = 0.0;
  double delay = 0.0;
  double step = 0.0;
};

/// Grid argmin of the pipelined delay over lambda (first minimizer on ties).
inline LambdaGridResult oracle_lambda(const DeviceProfile& dev, double beta, double t, double vc,
                                      const GridSpec& grid = {}) {
  const auto prof = lambda_profile(dev, beta, t, vc, grid);
  const auto it = std::min_element(prof.begin(), prof.end());
  return {grid.at(static_cast<std::size_t>(it - prof.begin())), *it, grid.step()};
}

/// True when the sequence falls (weakly) to its minimum and then rises
/// (weakly), allowing `rel_tol` of rounding noise.
inline bool is_unimodal(const std::vector<double>& v, double rel_tol = 1e-12) {
  if (v.empty()) return true;
  const auto argmin = static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
  for (std::size_t i = 1; i <= argmin; ++i)
    if (v[i] > v[i - 1] * (1.0 + rel_tol)) return false;
  for (std::size_t i = argmin + 1; i < v.size(); ++i)
    if (v[i] < v[i - 1] * (1.0 - rel_tol)) return false;
  return true;
}

/// Coarse grid plus local refinements for the allocation oracle.
struct AllocationGrid {
  std::size_t resolution = 0;     ///< coarse intervals per resource; 0 picks 500 (K <= 2) or 40 (K = 3)
  std::size_t refinements = 1;    ///< each divides the step by `refine_factor`
  std::size_t refine_factor = 10;
  std::size_t refine_window = 2;  ///< half-width of the refined box, in previous steps
};

struct OracleResult {
  Allocation allocation;
  double objective = 0.0;   ///< seconds
  double resolution = 0.0;  ///< final grid step, in fractions of each budget
  std::size_t evaluations = 0;
};

namespace detail {

inline double model_delay(const DeviceProfile& dev, double beta, Model model, double t, double vc) {
  switch (model) {
    case Model::local: return local_delay(dev, beta, t).value_or_inf();
    case Model::edge: return edge_delay(dev, t, vc).value_or_inf();
    case Model::partial: return optimal_partial_delay(dev, beta, t, vc).delay;
    case Model::partial_special: break;
  }
  throw ValidationError("oracle_allocation supports the local, edge and partial models");
}

// Visits every interior point of {x_i >= step, sum x_i <= 1 - step} on an
// integer lattice with `n` intervals, for `dims` free coordinates.
inline void for_each_simplex_point(std::size_t dims, std::size_t n,
                                   const std::function<void(const std::vector<double>&)>& fn) {
  std::vector<std::size_t> idx(dims, 1);
  std::vector<double> x(dims);
  if (dims == 0) {
    fn(x);
    return;
  }
  const double h = 1.0 / static_cast<double>(n);
  while (true) {
    std::size_t sum = 0;
    for (std::size_t i = 0; i < dims; ++i) sum += idx[i];
    if (sum <= n - 1) {
      for (std::size_t i = 0; i < dims; ++i) x[i] = h * static_cast<double>(idx[i]);
      fn(x);
    }
    std::size_t d = 0;
    while (d < dims) {
      if (++idx[d] <= n - 1) break;
      idx[d] = 1;
      ++d;
    }
    if (d == dims) return;
  }
}

}  // namespace detail

/// Exhaustive minimum of the weighted delay over the active-constraint
/// simplices sum t = 1, sum vc = V^c, for K <= 3. In the partial model each
/// grid point uses the optimal split.
inline OracleResult oracle_allocation(const Scenario& s, const AllocationGrid& grid = {},
                                      Model model = Model::partial) {
  const std::size_t n = s.size();
  if (n > 3) throw ValidationError("oracle_allocation is limited to K <= 3");
  const std::size_t coarse = grid.resolution != 0 ? grid.resolution : (n <= 2 ? 500 : 40);
  if (coarse < 2) throw ValidationError("grid resolution must be >= 2");
  if (grid.refine_factor < 2 && grid.refinements > 0) throw ValidationError("refine_factor must be >= 2");
  if (model == Model::partial_special) throw ValidationError("oracle_allocation does not cover the special case");

  const double beta = s.params().compression_ratio;
  const double cloud = s.params().cloud_capacity;
  const bool uses_cloud = model != Model::local;
  const std::size_t free = n - 1;
  const std::size_t dims = uses_cloud ? 2 * free : free;

  OracleResult best;
  best.objective = std::numeric_limits<double>::infinity();
  std::vector<double> best_point(dims);

  auto evaluate_point = [&](const std::vector<double>& x) {
    ++best.evaluations;
    double rest_t = 1.0, rest_v = 1.0;
    for (std::size_t i = 0; i < free; ++i) {
      rest_t -= x[i];
      if (uses_cloud) rest_v -= x[free + i];
    }
    if (!(rest_t > 0.0) || !(rest_v > 0.0)) return;
    double f = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      const double t = k < free ? x[k] : rest_t;
      const double v = uses_cloud ? (k < free ? x[free + k] : rest_v) : 1.0 / static_cast<double>(n);
      f += s[k].weight * detail::model_delay(s[k], beta, model, t, v * cloud);
    }
    if (f < best.objective) {
      best.objective = f;
      best_point = x;
    }
  };

  // Coarse pass: the product of the two simplices.
  std::vector<double> joint(dims);
  detail::for_each_simplex_point(free, coarse, [&](const std::vector<double>& tx) {
    std::copy(tx.begin(), tx.end(), joint.begin());
    if (!uses_cloud) {
      evaluate_point(joint);
      return;
    }
    detail::for_each_simplex_point(free, coarse, [&](const std::vector<double>& vx) {
      std::copy(vx.begin(), vx.end(), joint.begin() + static_cast<std::ptrdiff_t>(free));
      evaluate_point(joint);
    });
  });

  double step = 1.0 / static_cast<double>(coarse);
  for (std::size_t r = 0; r < grid.refinements && dims > 0; ++r) {
    const double fine = step / static_cast<double>(grid.refine_factor);
    const auto half = static_cast<long>(grid.refine_window * grid.refine_factor);
    const std::vector<double> center = best_point;
    std::vector<long> off(dims, -half);
    std::vector<double> x(dims);
    while (true) {
      bool inside = true;
      for (std::size_t i = 0; i < dims; ++i) {
        x[i] = center[i] + fine * static_cast<double>(off[i]);
        if (!(x[i] > 0.0)) inside = false;
      }
      if (inside) evaluate_point(x);
      std::size_t d = 0;
      while (d < dims) {
        if (++off[d] <= half) break;
        off[d] = -half;
        ++d;
      }
      if (d == dims) break;
    }
    step = fine;
  }

  best.resolution = step;
  best.allocation.model = model;
  best.allocation.t.resize(n);
  best.allocation.vc.resize(n);
  best.allocation.lambda.resize(n);
  double rest_t = 1.0, rest_v = 1.0;
  for (std::size_t i = 0; i < free; ++i) {
    rest_t -= best_point[i];
    if (uses_cloud) rest_v -= best_point[free + i];
  }
  for (std::size_t k = 0; k < n; ++k) {
    best.allocation.t[k] = k < free ? best_point[k] : rest_t;
    best.allocation.vc[k] = uses_cloud ? (k < free ? best_point[free + k] : rest_v) * cloud : 0.0;
    switch (model) {
      case Model::local: best.allocation.lambda[k] = 1.0; break;
      case Model::edge: best.allocation.lambda[k] = 0.0; break;
      default: best.allocation.lambda[k] = optimal_lambda(s[k], beta, best.allocation.t[k], best.allocation.vc[k]);
    }
  }
  return best;
}

/// KKT residuals of an allocation, all relative.
struct KktReport {
  Model model = Model::partial;
  double spread_t = 0.0;   ///< (max - min) / mean of the frame-equalized quantity over active devices
  double spread_vc = 0.0;  ///< same for the cloud-equalized quantity (0 for the local model)
  double gap_t = 0.0;      ///< |sum t - 1|
  double gap_vc = 0.0;     ///< |sum vc - V^c| / V^c
  double slackness = 0.0;  ///< max over constraints of multiplier * slack / (multiplier * budget)
  double clipped_violation = 0.0;  ///< largest relative breach of the zero-share condition (special case)
  double multiplier_t = 0.0;       ///< mean of the frame-equalized quantity
  double multiplier_vc = 0.0;

  double worst() const { return std::max({spread_t, spread_vc, gap_t, gap_vc, slackness, clipped_violation}); }
};

namespace detail {

inline double spread(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return (*hi - *lo) / mean;
}

inline double mean(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m += x;
  return v.empty() ? 0.0 : m / static_cast<double>(v.size());
}

}  // namespace detail

/// Stationarity spreads (the per-device marginal delay of each resource is
/// equalized across devices at an optimum), primal gaps and complementary
/// slackness for the allocation produced by the solver of `model`.
///
///   local:            a beta L / (R t^2)
///   edge:             a L / (R t^2)  and  a L / vc^2
///   partial:          -a dD/dt  and  -a dD/dvc  (optimal-split delay)
///   partial-special:  a L R u^2 / P^2  and  a L s^2 / P^2,  P = s Vd + s u + Vd u
inline KktReport kkt_residuals(const Scenario& s, const Allocation& a, Model model) {
  if (a.model != model) {
    throw ValidationError("allocation was produced for the " + std::string(to_string(a.model)) +
                          " model, not " + std::string(to_string(model)));
  }
  check_allocation(s, a, 1e-6);
  const std::size_t n = s.size();
  const double beta = s.params().compression_ratio;
  const double cloud = s.params().cloud_capacity;

  KktReport rep;
  rep.model = model;
  std::vector<double> qt, qv;
  std::vector<std::size_t> clipped;
  double sum_t = 0.0, sum_v = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto& d = s[k];
    const double w = d.weight, L = d.data_size, R = d.rate(), vd = d.local_capacity;
    const double t = a.t[k], vc = a.vc[k];
    sum_t += t;
    sum_v += vc;
    switch (model) {
      case Model::local:
        if (!(t > 0.0)) throw ValidationError("local allocation has a zero time share");
        qt.push_back(w * beta * L / (R * t * t));
        break;
      case Model::edge:
        if (!(t > 0.0) || !(vc > 0.0)) throw ValidationError("edge allocation has a zero share");
        qt.push_back(w * L / (R * t * t));
        qv.push_back(w * L / (vc * vc));
        break;
      case Model::partial: {
        if (!(t > 0.0) || !(vc > 0.0)) throw ValidationError("partial allocation has a zero share");
        const auto g = delay_subgradient(d, beta, t, vc);
        qt.push_back(-w * g.dt);
        qv.push_back(-w * g.dvc);
        break;
      }
      case Model::partial_special: {
        if (t == 0.0 && vc == 0.0) {
          clipped.push_back(k);
          break;
        }
        const double sc = t * R;
        const double p = sc * vd + sc * vc + vd * vc;
        qt.push_back(w * L * R * vc * vc / (p * p));
        qv.push_back(w * L * sc * sc / (p * p));
        break;
      }
    }
  }

  rep.spread_t = detail::spread(qt);
  rep.spread_vc = detail::spread(qv);
  rep.multiplier_t = detail::mean(qt);
  rep.multiplier_vc = detail::mean(qv);
  rep.gap_t = std::abs(sum_t - 1.0);
  rep.gap_vc = model == Model::local ? 0.0 : std::abs(sum_v - cloud) / cloud;
  // Both multipliers are strictly positive here, so the normalized
  // products reduce to the budget slack.
  rep.slackness = std::max(rep.multiplier_t > 0.0 ? rep.gap_t : 0.0, rep.multiplier_vc > 0.0 ? rep.gap_vc : 0.0);

  // A device left at zero must have no positive stationary point at the
  // prices: with A = sqrt(a L R / theta) and C = sqrt(a L / omega) that means
  // A <= Vd, C <= Vd or (A - Vd)(C - Vd) <= Vd^2.
  for (std::size_t k : clipped) {
    if (!(rep.multiplier_t > 0.0) || !(rep.multiplier_vc > 0.0)) continue;
    const double w = s[k].weight, L = s[k].data_size, vd = s[k].local_capacity;
    const double big_a = std::sqrt(w * L * s[k].rate() / rep.multiplier_t);
    const double big_c = std::sqrt(w * L / rep.multiplier_vc);
    if (big_a > vd && big_c > vd)
      rep.clipped_violation = std::max(rep.clipped_violation, (big_a - vd) * (big_c - vd) / (vd * vd) - 1.0);
  }
  rep.clipped_violation = std::max(rep.clipped_violation, 0.0);
  return rep;
}

}  // namespace meco::oracle

#endif  // MECO_ORACLE_HPP
