#ifndef MECO_SUBGRADIENT_HPP
#define MECO_SUBGRADIENT_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "meco/delay.hpp"
#include "meco/error.hpp"
#include "meco/rng.hpp"
#include "meco/scenario.hpp"
#include "meco/solver_report.hpp"

// Sub-gradient solver for the partial-offloading problem after the optimal
// split has been substituted:
//
//   minimize  F(t, vc) = sum_k a_k D_k(t_k, vc_k)
//   s.t.      sum t <= 1,  sum vc <= V^c
//
// where D_k = max(D_k1, D_k2) is piecewise rational in (s = t R, u = vc):
//
//   D_k1 = L (s + u)(s + b Vd) / (s ((1 + b) Vd u + s (Vd + u)))   (s >= sqrt(b Vd u))
//   D_k2 = L (s + b Vd) / (s (Vd + s))                            (s <  sqrt(b Vd u))
//
// Derivatives come from the quotient rule on N/D with hand-derived partials
// of numerator and denominator:
//
//   D_k1:  N = (s + u)(s + b Vd)       N_s = 2s + u + b Vd   N_u = s + b Vd
//                                      N_ss = 2  N_su = 1    N_uu = 0
//          D = s (1 + b) Vd u + s^2 (Vd + u)
//                                      D_s = (1 + b) Vd u + 2 s (Vd + u)
//                                      D_u = s (1 + b) Vd + s^2
//                                      D_ss = 2 (Vd + u)  D_su = (1 + b) Vd + 2s  D_uu = 0
//   D_k2:  N = s + b Vd,  D = s Vd + s^2   (no dependence on u)
//
//   (N/D)_x  = (N_x D - N D_x) / D^2
//   (N/D)_xy = (N_xy D + N_x D_y - N_y D_x - N D_xy) / D^2 - 2 (N_x D - N D_x) D_y / D^3
//
// and d/dt = R d/ds. tests/subgradient_test.cpp gates these against central
// finite differences.
namespace meco {

/// First derivatives of one device's delay piece, seconds per unit.
struct PieceGradient {
  double dt = 0.0;   ///< d/dt
  double dvc = 0.0;  ///< d/dvc, seconds per (bit/s)
};

/// Second derivatives of one device's delay piece.
struct PieceHessian {
  double tt = 0.0;
  double tv = 0.0;
  double vv = 0.0;

  double leading_minor_1() const { return tt; }
  double leading_minor_2() const { return tt * vv - tv * tv; }
};

namespace detail {

struct Rational {
  double n, n_s, n_u, n_ss, n_su, n_uu;
  double d, d_s, d_u, d_ss, d_su, d_uu;

  double value() const { return n / d; }
  double ds() const { return (n_s * d - n * d_s) / (d * d); }
  double du() const { return (n_u * d - n * d_u) / (d * d); }
  double dss() const { return second(n_s, n_s, d_s, d_s, n_ss, d_ss); }
  double dsu() const { return second(n_s, n_u, d_s, d_u, n_su, d_su); }
  double duu() const { return second(n_u, n_u, d_u, d_u, n_uu, d_uu); }

 private:
  double second(double nx, double ny, double dx, double dy, double nxy, double dxy) const {
    return (nxy * d + nx * dy - ny * dx - n * dxy) / (d * d) - 2.0 * (nx * d - n * dx) * dy / (d * d * d);
  }
};

inline Rational compute_limited_rational(double s, double u, double vd, double b) {
  Rational r{};
  r.n = (s + u) * (s + b * vd);
  r.n_s = 2.0 * s + u + b * vd;
  r.n_u = s + b * vd;
  r.n_ss = 2.0;
  r.n_su = 1.0;
  r.n_uu = 0.0;
  r.d = s * (1.0 + b) * vd * u + s * s * (vd + u);
  r.d_s = (1.0 + b) * vd * u + 2.0 * s * (vd + u);
  r.d_u = s * (1.0 + b) * vd + s * s;
  r.d_ss = 2.0 * (vd + u);
  r.d_su = (1.0 + b) * vd + 2.0 * s;
  r.d_uu = 0.0;
  return r;
}

inline Rational channel_limited_rational(double s, double vd, double b) {
  Rational r{};
  r.n = s + b * vd;
  r.n_s = 1.0;
  r.d = s * vd + s * s;
  r.d_s = vd + 2.0 * s;
  r.d_ss = 2.0;
  return r;
}

}  // namespace detail

/// Gradient of the requested piece at (t, vc), whichever side of the
/// boundary the point lies on.
inline PieceGradient piece_gradient(const DeviceProfile& dev, double beta, double t, double vc,
                                    SegmentationCase piece) {
  const double rate = dev.rate();
  const double s = t * rate;
  const double L = dev.data_size;
  const auto r = piece == SegmentationCase::compute_limited
                     ? detail::compute_limited_rational(s, vc, dev.local_capacity, beta)
                     : detail::channel_limited_rational(s, dev.local_capacity, beta);
  return {L * rate * r.ds(), L * r.du()};
}

/// Hessian of the compute-limited piece D_k1 with respect to (t, vc).
inline PieceHessian compute_limited_hessian(const DeviceProfile& dev, double beta, double t, double vc) {
  const double rate = dev.rate();
  const auto r = detail::compute_limited_rational(t * rate, vc, dev.local_capacity, beta);
  const double L = dev.data_size;
  return {L * rate * rate * r.dss(), L * rate * r.dsu(), L * r.duu()};
}

/// d^2 D_k2 / dt^2 (D_k2 does not depend on vc).
inline double channel_limited_curvature(const DeviceProfile& dev, double beta, double t) {
  const double rate = dev.rate();
  const auto r = detail::channel_limited_rational(t * rate, dev.local_capacity, beta);
  return dev.data_size * rate * rate * r.dss();
}

/// Sub-gradient of the optimal-split delay: the active piece's gradient, and
/// the compute-limited endpoint of the sub-differential on the boundary.
inline PieceGradient delay_subgradient(const DeviceProfile& dev, double beta, double t, double vc) {
  return piece_gradient(dev, beta, t, vc, segmentation_case(dev, beta, t, vc));
}

namespace detail {

inline void check_decision_vector(const Scenario& s, std::span<const double> x, double floor_rel) {
  const std::size_t n = s.size();
  if (x.size() != 2 * n) throw ValidationError("decision vector must have length 2K");
  const double cloud = s.params().cloud_capacity;
  for (std::size_t k = 0; k < n; ++k) {
    if (!(x[k] >= floor_rel) || !std::isfinite(x[k]))
      throw ValidationError("t[" + std::to_string(k) + "] is below the positivity floor");
    if (!(x[n + k] >= floor_rel * cloud) || !std::isfinite(x[n + k]))
      throw ValidationError("vc[" + std::to_string(k) + "] is below the positivity floor");
  }
}

inline std::vector<double> subgradient_impl(const Scenario& s, std::span<const double> x, bool flip_fault) {
  const std::size_t n = s.size();
  std::vector<double> g(2 * n, 0.0);
  double sum_t = 0.0, sum_v = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum_t += x[k];
    sum_v += x[n + k];
  }
  if (sum_t > 1.0) {
    std::fill(g.begin(), g.begin() + static_cast<std::ptrdiff_t>(n), 1.0);
    return g;
  }
  if (sum_v > s.params().cloud_capacity) {
    std::fill(g.begin() + static_cast<std::ptrdiff_t>(n), g.end(), 1.0);
    return g;
  }
  const double beta = s.params().compression_ratio;
  for (std::size_t k = 0; k < n; ++k) {
    const auto pg = delay_subgradient(s[k], beta, x[k], x[n + k]);
    g[k] = s[k].weight * (flip_fault ? -pg.dt : pg.dt);
    g[n + k] = s[k].weight * pg.dvc;
  }
  return g;
}

}  // namespace detail

/// Weighted optimal-split delay F at x = [t_1..t_K, vc_1..vc_K] (vc in bits/s).
inline double objective(const Scenario& s, std::span<const double> x, double floor_rel = 1e-9) {
  detail::check_decision_vector(s, x, floor_rel);
  const std::size_t n = s.size();
  const double beta = s.params().compression_ratio;
  double f = 0.0;
  for (std::size_t k = 0; k < n; ++k) f += s[k].weight * optimal_partial_delay(s[k], beta, x[k], x[n + k]).delay;
  return f;
}

/// Sub-gradient used by the iteration: the obstacle direction of the frame
/// constraint if it is violated, else that of the cloud constraint if it is
/// violated, else a sub-gradient of F.
inline std::vector<double> subgradient(const Scenario& s, std::span<const double> x, double floor_rel = 1e-9) {
  detail::check_decision_vector(s, x, floor_rel);
  return detail::subgradient_impl(s, x, false);
}

enum class StepRule { diminishing, polyak };

inline std::string_view to_string(StepRule r) { return r == StepRule::diminishing ? "diminishing" : "polyak"; }

/// Iteration settings. Step scales of 0 select the defaults documented on
/// each field.
struct SolverConfig {
  StepRule step_rule = StepRule::polyak;
  /// diminishing: step length a/(n+1)^p along g/||g||, in units where both
  ///   resources are normalized to a total of 1; default 1/sqrt(K).
  /// polyak: gamma_n = b/(n+1)^p in seconds; default 0.5 F(x0).
  double step_scale = 0.0;
  /// p above, in (0.5, 1]: sum = inf and sum of squares < inf.
  double step_decay = 0.6;
  std::size_t max_iters = 200'000;
  double tol = 1e-6;  ///< seconds
  double positivity_floor = 1e-9;
  std::size_t stagnation_window = 200;
};

struct PartialSolution {
  Allocation allocation;
  SolverReport report;
};

namespace detail {

/// Objective and gradient in normalized coordinates y = [t, vc / V^c].
class NormalizedProblem {
 public:
  explicit NormalizedProblem(const Scenario& s)
      : s_(s), n_(s.size()), cloud_(s.params().cloud_capacity), beta_(s.params().compression_ratio) {}

  double value(const std::vector<double>& y) const {
    double f = 0.0;
    for (std::size_t k = 0; k < n_; ++k) {
      const double comm = y[k] * s_[k].rate();
      const double vc = y[n_ + k] * cloud_;
      const double vd = s_[k].local_capacity;
      const double d = comm >= formulas::boundary(vd, vc, beta_)
                           ? formulas::delay_compute_limited(s_[k].data_size, comm, vd, vc, beta_)
                           : formulas::delay_channel_limited(s_[k].data_size, comm, vd, beta_);
      f += s_[k].weight * d;
    }
    return f;
  }

  void gradient(const std::vector<double>& y, std::vector<double>& g) const {
    for (std::size_t k = 0; k < n_; ++k) {
      const auto pg = delay_subgradient(s_[k], beta_, y[k], y[n_ + k] * cloud_);
      g[k] = s_[k].weight * pg.dt;
      g[n_ + k] = s_[k].weight * pg.dvc * cloud_;
    }
  }

 private:
  const Scenario& s_;
  std::size_t n_;
  double cloud_;
  double beta_;
};

}  // namespace detail

/// Projected sub-gradient iteration x <- x - phi_n g_n with obstacle steps for
/// violated sum constraints. Returns the best feasible iterate.
inline PartialSolution solve_partial(const Scenario& s, const SolverConfig& config = {}) {
  for (std::size_t k = 0; k < s.size(); ++k)
    if (!s[k].avg_rate) throw ValidationError("devices[" + std::to_string(k) + "].avg_rate is required");
  if (!(config.tol > 0.0)) throw ValidationError("tol must be > 0");
  if (config.max_iters == 0) throw ValidationError("max_iters must be >= 1");
  if (!(config.positivity_floor > 0.0 && config.positivity_floor < 1.0))
    throw ValidationError("positivity_floor must lie in (0, 1)");
  if (!(config.step_scale >= 0.0)) throw ValidationError("step_scale must be >= 0");
  if (!(config.step_decay > 0.5 && config.step_decay <= 1.0)) throw ValidationError("step_decay must lie in (0.5, 1]");

  const std::size_t n = s.size();
  const double cloud = s.params().cloud_capacity;
  const detail::NormalizedProblem problem(s);
  constexpr double kFeasTol = 1e-12;

  std::vector<double> y(2 * n, 1.0 / static_cast<double>(n + 1));
  std::vector<double> g(2 * n);

  SolverReport report;
  report.step_rule = std::string(to_string(config.step_rule));
  double f = problem.value(y);
  if (!std::isfinite(f)) throw SolverError("non-finite objective at the initial point");
  const double scale = config.step_scale > 0.0 ? config.step_scale
                       : config.step_rule == StepRule::polyak
                           ? 0.5 * f
                           : 1.0 / std::sqrt(static_cast<double>(n));

  double best = f;
  std::vector<double> best_y = y;
  double last_feasible = f;
  std::size_t last_improvement = 0;
  report.objective_history.push_back(f);
  report.best_history.push_back(best);
  report.termination = Termination::max_iters;

  std::size_t iter = 0;
  while (iter < config.max_iters) {
    double sum_t = 0.0, sum_v = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sum_t += y[k];
      sum_v += y[n + k];
    }

    // obstacle direction restricted to coordinates above the floor
    double violation = 0.0;
    auto obstacle = [&](std::size_t first) {
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t i = first; i < first + n; ++i) g[i] = y[i] > config.positivity_floor ? 1.0 : 0.0;
    };
    if (sum_t - 1.0 > kFeasTol) {
      obstacle(0);
      violation = sum_t - 1.0;
    } else if (sum_v - 1.0 > kFeasTol) {
      obstacle(n);
      violation = sum_v - 1.0;
    } else {
      problem.gradient(y, g);
    }

    double norm2 = 0.0;
    for (double gi : g) norm2 += gi * gi;
    const double norm = std::sqrt(norm2);
    report.subgradient_norm_history.push_back(norm);
    if (norm == 0.0) {
      report.termination = Termination::tolerance;
      break;
    }

    const double decay = std::pow(static_cast<double>(iter + 1), config.step_decay);
    double phi = 0.0;
    if (config.step_rule == StepRule::diminishing) {
      phi = scale / decay / norm;
    } else if (violation > 0.0) {
      phi = violation / norm2;  // lands on the violated hyperplane
    } else {
      phi = (f - best + scale / decay) / norm2;
    }

    for (std::size_t i = 0; i < 2 * n; ++i) y[i] = std::max(y[i] - phi * g[i], config.positivity_floor);
    ++iter;

    f = problem.value(y);
    if (!std::isfinite(f)) {
      std::ostringstream msg;
      msg << "non-finite objective at iteration " << iter;
      throw SolverError(msg.str());
    }

    sum_t = 0.0;
    sum_v = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      sum_t += y[k];
      sum_v += y[n + k];
    }
    const bool feasible = sum_t - 1.0 <= kFeasTol && sum_v - 1.0 <= kFeasTol;

    report.objective_history.push_back(f);
    bool converged = false;
    if (feasible) {
      if (f < best - config.tol) last_improvement = iter;
      if (f < best) {
        best = f;
        best_y = y;
      }
      converged = std::abs(f - last_feasible) <= config.tol;
      last_feasible = f;
    }
    report.best_history.push_back(best);

    if (converged) {
      report.termination = Termination::tolerance;
      break;
    }
    if (iter - last_improvement >= config.stagnation_window) {
      report.termination = Termination::stagnation;
      break;
    }
  }

  // Pull the returned point strictly inside both budgets.
  double sum_t = 0.0, sum_v = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    sum_t += best_y[k];
    sum_v += best_y[n + k];
  }
  for (std::size_t k = 0; k < n; ++k) {
    if (sum_t > 1.0) best_y[k] /= sum_t;
    if (sum_v > 1.0) best_y[n + k] /= sum_v;
  }

  PartialSolution out;
  out.allocation.model = Model::partial;
  out.allocation.t.resize(n);
  out.allocation.vc.resize(n);
  out.allocation.lambda.resize(n);
  report.best_x.resize(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    out.allocation.t[k] = best_y[k];
    out.allocation.vc[k] = best_y[n + k] * cloud;
    out.allocation.lambda[k] =
        optimal_lambda(s[k], s.params().compression_ratio, out.allocation.t[k], out.allocation.vc[k]);
    report.best_x[k] = out.allocation.t[k];
    report.best_x[n + k] = out.allocation.vc[k];
  }
  report.best_objective = problem.value(best_y);
  report.iterations = iter;
  out.report = std::move(report);
  return out;
}

struct ConvexityViolation {
  double t = 0.0;
  double vc = 0.0;
  std::string check;
  double value = 0.0;
};

struct ConvexityReport {
  std::size_t samples = 0;
  std::size_t violations = 0;
  std::vector<ConvexityViolation> examples;  ///< first few violations
  double min_minor_1 = std::numeric_limits<double>::infinity();  ///< scaled by t^2 / D
  double min_minor_2 = std::numeric_limits<double>::infinity();  ///< scaled by t^2 vc^2 / D^2
  double min_channel_curvature = std::numeric_limits<double>::infinity();  ///< scaled by t^2 / D
};

/// Samples (t, vc) log-uniformly over [1e-4, 1] x [1e-4, 1] V^c and checks
/// that D_k1 has a positive-definite Hessian, D_k2 is convex in t, and the
/// larger piece is the one selected by t R vs sqrt(beta Vd vc).
inline ConvexityReport convexity_diagnostics(const DeviceProfile& dev, double beta, double cloud_total,
                                             std::size_t samples, std::uint64_t seed) {
  if (samples == 0) throw ValidationError("samples must be >= 1");
  ConvexityReport rep;
  rep.samples = samples;
  CounterRng rng(seed, streams::diagnostics);
  const double rate = dev.rate();
  const double vd = dev.local_capacity;
  const double L = dev.data_size;

  auto flag = [&rep](double t, double vc, const char* what, double value) {
    ++rep.violations;
    if (rep.examples.size() < 8) rep.examples.push_back({t, vc, what, value});
  };

  for (std::size_t i = 0; i < samples; ++i) {
    const double t = std::pow(10.0, rng.uniform(-4.0, 0.0));
    const double vc = cloud_total * std::pow(10.0, rng.uniform(-4.0, 0.0));
    const double s = t * rate;

    const auto h = compute_limited_hessian(dev, beta, t, vc);
    const double d1 = formulas::delay_compute_limited(L, s, vd, vc, beta);
    const double d2 = formulas::delay_channel_limited(L, s, vd, beta);
    const double m1 = h.leading_minor_1() * t * t / d1;
    const double m2 = h.leading_minor_2() * (t * t * vc * vc) / (d1 * d1);
    const double c2 = channel_limited_curvature(dev, beta, t) * t * t / d2;
    rep.min_minor_1 = std::min(rep.min_minor_1, m1);
    rep.min_minor_2 = std::min(rep.min_minor_2, m2);
    rep.min_channel_curvature = std::min(rep.min_channel_curvature, c2);
    if (!(m1 > 0.0)) flag(t, vc, "minor_1", m1);
    if (!(m2 > 0.0)) flag(t, vc, "minor_2", m2);
    if (!(c2 > 0.0)) flag(t, vc, "channel_curvature", c2);

    // The sign of D_k1 - D_k2 must match the sign of s^2 - beta Vd vc;
    // differences at rounding level are ties.
    const double gap = s * s - beta * vd * vc;
    const double diff = d1 - d2;
    const bool tie = std::abs(diff) <= 1e-12 * std::max(d1, d2) || std::abs(gap) <= 1e-12 * std::max(s * s, beta * vd * vc);
    if (!tie && ((gap > 0.0) != (diff > 0.0))) flag(t, vc, "piece_order", diff);
  }
  return rep;
}

}  // namespace meco

#endif  // MECO_SUBGRADIENT_HPP
