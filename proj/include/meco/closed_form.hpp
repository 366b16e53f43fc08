#ifndef MECO_CLOSED_FORM_HPP
#define MECO_CLOSED_FORM_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "meco/delay.hpp"
#include "meco/error.hpp"
#include "meco/scenario.hpp"
#include "meco/solver_report.hpp"

namespace meco {

struct ClosedFormSolution {
  Allocation allocation;
  double system_delay = 0.0;         ///< closed-form double-sum expression
  double system_delay_direct = 0.0;  ///< weighted sum of per-device delays at the allocation
};

namespace detail {

inline void require_rates(const Scenario& s) {
  for (std::size_t k = 0; k < s.size(); ++k)
    if (!s[k].avg_rate) throw ValidationError("devices[" + std::to_string(k) + "].avg_rate is required");
}

/// Shares proportional to `w` that sum to `total`; the last share is the
/// complement of the others so the sum is exact.
inline std::vector<double> proportional_split(const std::vector<double>& w, double total) {
  const double sum = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> out(w.size());
  double used = 0.0;
  for (std::size_t k = 0; k + 1 < w.size(); ++k) {
    out[k] = total * (w[k] / sum);
    used += out[k];
  }
  out.back() = std::max(0.0, total - used);
  return out;
}

}  // namespace detail

/// Optimal TDMA shares for local compression: t_k proportional to
/// sqrt(a_k L_k / R_k).
inline ClosedFormSolution solve_local(const Scenario& s) {
  detail::require_rates(s);
  const std::size_t n = s.size();
  const double beta = s.params().compression_ratio;

  std::vector<double> w(n);
  for (std::size_t k = 0; k < n; ++k) w[k] = std::sqrt(s[k].weight * s[k].data_size / s[k].rate());

  ClosedFormSolution out;
  out.allocation.model = Model::local;
  out.allocation.t = detail::proportional_split(w, 1.0);
  out.allocation.vc.assign(n, 0.0);
  out.allocation.lambda.assign(n, 1.0);

  double compression = 0.0;
  double transmission = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    compression += s[i].weight * s[i].data_size / s[i].local_capacity;
    for (std::size_t j = 0; j < n; ++j)
      transmission += std::sqrt(s[i].weight * s[j].weight * s[i].data_size * s[j].data_size /
                                (s[i].rate() * s[j].rate()));
  }
  out.system_delay = compression + beta * transmission;

  for (std::size_t k = 0; k < n; ++k)
    out.system_delay_direct += s[k].weight * local_delay(s[k], beta, out.allocation.t[k]).seconds();
  return out;
}

/// Optimal shares for edge compression: t_k as for the local model and
/// vc_k proportional to sqrt(a_k L_k).
inline ClosedFormSolution solve_edge(const Scenario& s) {
  detail::require_rates(s);
  const std::size_t n = s.size();
  const double cloud = s.params().cloud_capacity;
  if (!(cloud > 0.0)) throw ValidationError("params.cloud_capacity must be > 0");

  std::vector<double> wt(n), wv(n);
  for (std::size_t k = 0; k < n; ++k) {
    wt[k] = std::sqrt(s[k].weight * s[k].data_size / s[k].rate());
    wv[k] = std::sqrt(s[k].weight * s[k].data_size);
  }

  ClosedFormSolution out;
  out.allocation.model = Model::edge;
  out.allocation.t = detail::proportional_split(wt, 1.0);
  out.allocation.vc = detail::proportional_split(wv, cloud);
  out.allocation.lambda.assign(n, 0.0);

  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      sum += std::sqrt(s[i].weight * s[j].weight * s[i].data_size * s[j].data_size) *
             (std::sqrt(1.0 / (s[i].rate() * s[j].rate())) + 1.0 / cloud);
  out.system_delay = sum;

  for (std::size_t k = 0; k < n; ++k)
    out.system_delay_direct += s[k].weight * edge_delay(s[k], out.allocation.t[k], out.allocation.vc[k]).seconds();
  return out;
}

/// Multipliers of the frame constraint (theta) and the cloud-capacity
/// constraint (omega) with the remaining primal slack.
struct DualState {
  double theta = 0.0;
  double omega = 0.0;
  double residual_t = 0.0;   ///< sum t - 1
  double residual_vc = 0.0;  ///< sum vc - V^c, bits/s
};

struct SpecialSolution {
  Allocation allocation;  ///< lambda from the special-case split
  DualState dual;
  SolverReport report;
  std::vector<double> device_delays;  ///< special-case delay per device, seconds
  double relaxed_objective = 0.0;     ///< weighted special-case delay
  Delay objective = Delay::finite(0.0);  ///< evaluate_special() of the allocation
};

/// Weighted delay of a special-case allocation: active devices under the full
/// pipelined model with their own lambda, devices left at t = vc = 0 at
/// L / Vd (all-local, compressed upload neglected as in the special case).
inline SystemDelay evaluate_special(const Scenario& s, const Allocation& a) {
  check_allocation(s, a);
  SystemDelay out;
  double sum = 0.0;
  bool starved = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    DelayBreakdown b;
    if (a.t[k] == 0.0 && a.vc[k] == 0.0) {
      b.comp_d = s[k].data_size / s[k].local_capacity;
      b.total = Delay::finite(b.comp_d);
    } else {
      b = partial_delay(s[k], s.params().compression_ratio, a.t[k], a.vc[k], a.lambda[k]);
    }
    if (b.total.is_infinite())
      starved = true;
    else
      sum += s[k].weight * b.total.seconds();
    out.devices.push_back(b);
  }
  out.total = starved ? Delay::infinite() : Delay::finite(sum);
  return out;
}

namespace detail {

/// Primal point of the special-case problem for fixed multipliers.
struct SpecialPrimal {
  std::vector<double> comm;   ///< t R, bits/s (0 when clipped)
  std::vector<double> cloud;  ///< vc, bits/s (0 when clipped)
  double omega = 0.0;
  bool any_active = false;
};

/// For fixed theta, picks omega so the cloud capacity is used exactly.
/// With A = sqrt(aLR/theta) and C = sqrt(aL/omega) the stationarity pair
/// solves to  tR = A - Vd - A Vd / C,  vc = C - Vd - C Vd / A,  and both are
/// positive or both clipped. vc is linear in x = 1/sqrt(omega) on a fixed
/// active set, so omega follows from a sorted water-filling pass.
inline SpecialPrimal special_primal(const Scenario& s, double theta) {
  const std::size_t n = s.size();
  const double budget = s.params().cloud_capacity;
  std::vector<double> a(n), slope(n);
  std::vector<std::size_t> order;
  for (std::size_t k = 0; k < n; ++k) {
    const double vd = s[k].local_capacity;
    a[k] = std::sqrt(s[k].weight * s[k].data_size * s[k].rate() / theta);
    if (a[k] > vd) {
      slope[k] = std::sqrt(s[k].weight * s[k].data_size) * (1.0 - vd / a[k]);
      order.push_back(k);
    }
  }

  SpecialPrimal out;
  out.comm.assign(n, 0.0);
  out.cloud.assign(n, 0.0);
  if (order.empty()) return out;

  // device k turns on once x exceeds Vd_k / slope_k
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return s[i].local_capacity / slope[i] < s[j].local_capacity / slope[j];
  });
  double sum_vd = 0.0, sum_slope = 0.0, x = 0.0;
  for (std::size_t m = 0; m < order.size(); ++m) {
    sum_vd += s[order[m]].local_capacity;
    sum_slope += slope[order[m]];
    x = (budget + sum_vd) / sum_slope;
    const bool last = m + 1 == order.size();
    if (last || x <= s[order[m + 1]].local_capacity / slope[order[m + 1]]) break;
  }
  out.omega = 1.0 / (x * x);

  for (std::size_t k : order) {
    const double vd = s[k].local_capacity;
    const double c = std::sqrt(s[k].weight * s[k].data_size) * x;
    const double u = c - vd - c * vd / a[k];
    if (u <= 0.0) continue;
    const double comm = a[k] - vd - a[k] * vd / c;
    if (comm <= 0.0) continue;
    out.comm[k] = comm;
    out.cloud[k] = u;
    out.any_active = true;
  }
  return out;
}

inline double frame_usage(const Scenario& s, const SpecialPrimal& p) {
  double sum = 0.0;
  for (std::size_t k = 0; k < s.size(); ++k) sum += p.comm[k] / s[k].rate();
  return sum;
}

}  // namespace detail

/// Closed-form allocation for the regime where uploading locally compressed
/// data is negligible (R >> Vd). Outer bisection on theta enforces the frame
/// constraint; for each theta the cloud constraint fixes omega.
///
/// `tol` bounds the allowed primal slack and the stationarity mismatch.
inline SpecialSolution solve_partial_special(const Scenario& s, double tol = 1e-10) {
  detail::require_rates(s);
  if (!(tol > 0.0)) throw ValidationError("tol must be > 0");
  const std::size_t n = s.size();
  const double budget = s.params().cloud_capacity;

  double theta_max = 0.0, theta_min = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < n; ++k) {
    const double vd = s[k].local_capacity;
    const double th = s[k].weight * s[k].data_size * s[k].rate() / (vd * vd);
    theta_max = std::max(theta_max, th);
    theta_min = std::min(theta_min, th);
  }

  // Above theta_max no device is active, so sum t = 0 there.
  double hi = theta_max;
  double lo = theta_min * 1e-3;
  double usage_lo = detail::frame_usage(s, detail::special_primal(s, lo));
  double previous = usage_lo;
  std::size_t decades = 0;
  while (usage_lo <= 1.0) {
    if (++decades > 60) {
      std::ostringstream msg;
      msg << "special-case dual search failed to bracket theta: sum t = " << usage_lo << " at theta = " << lo;
      throw SolverError(msg.str());
    }
    lo *= 0.1;
    usage_lo = detail::frame_usage(s, detail::special_primal(s, lo));
    if (usage_lo < previous * (1.0 - 1e-12))
      throw SolverError("special-case dual search: sum t is not monotone in theta");
    previous = usage_lo;
  }

  SolverReport report;
  report.step_rule = "dual-bisection";
  std::size_t iterations = 0;
  for (; iterations < 400; ++iterations) {
    const double mid = std::sqrt(lo * hi);
    if (!(mid > lo && mid < hi)) break;
    const double usage = detail::frame_usage(s, detail::special_primal(s, mid));
    report.objective_history.push_back(usage - 1.0);
    if (usage > 1.0)
      lo = mid;
    else
      hi = mid;
    if (hi / lo - 1.0 < 1e-15) break;
  }

  // pick whichever bracket end leaves the smaller frame residual
  const auto p_lo = detail::special_primal(s, lo);
  const auto p_hi = detail::special_primal(s, hi);
  const bool use_lo = std::abs(detail::frame_usage(s, p_lo) - 1.0) <= std::abs(detail::frame_usage(s, p_hi) - 1.0);
  const double theta = use_lo ? lo : hi;
  const auto& primal = use_lo ? p_lo : p_hi;
  if (!primal.any_active) throw SolverError("special-case dual search ended with every device clipped");

  SpecialSolution out;
  out.allocation.model = Model::partial_special;
  out.allocation.t.resize(n);
  out.allocation.vc.resize(n);
  out.allocation.lambda.resize(n);
  out.device_delays.resize(n);
  double sum_t = 0.0, sum_v = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const double rate = s[k].rate();
    out.allocation.t[k] = primal.comm[k] / rate;
    out.allocation.vc[k] = primal.cloud[k];
    if (primal.comm[k] > 0.0) {
      const auto sc = special_case(s[k], out.allocation.t[k], out.allocation.vc[k]);
      out.allocation.lambda[k] = sc.lambda;
      out.device_delays[k] = sc.delay.seconds();
    } else {
      // clipped: everything stays on the device
      out.allocation.lambda[k] = 1.0;
      out.device_delays[k] = s[k].data_size / s[k].local_capacity;
    }
    out.relaxed_objective += s[k].weight * out.device_delays[k];
    sum_t += out.allocation.t[k];
    sum_v += out.allocation.vc[k];

    // Both coupled stationarity forms must hold at the returned point.
    if (primal.comm[k] > 0.0) {
      const double vd = s[k].local_capacity;
      const double t = out.allocation.t[k], vc = out.allocation.vc[k];
      const double t_form =
          vc * std::max(std::sqrt(s[k].weight * s[k].data_size * rate / theta) - vd, 0.0) / (rate * (vd + vc));
      const double v_form =
          t * rate * std::max(std::sqrt(s[k].weight * s[k].data_size / primal.omega) - vd, 0.0) / (t * rate + vd);
      if (std::abs(t_form - t) > tol * t || std::abs(v_form - vc) > tol * vc) {
        std::ostringstream msg;
        msg << "special-case stationarity not satisfied for device " << k << " (t mismatch "
            << std::abs(t_form - t) / t << ", vc mismatch " << std::abs(v_form - vc) / vc
            << "); use the sub-gradient solver for this scenario";
        throw SolverError(msg.str());
      }
    }
  }
  out.dual = {theta, primal.omega, sum_t - 1.0, sum_v - budget};
  if (std::abs(out.dual.residual_t) > tol || std::abs(out.dual.residual_vc) > tol * budget) {
    std::ostringstream msg;
    msg << "special-case constraints not active within tol: sum t - 1 = " << out.dual.residual_t
        << ", sum vc - V^c = " << out.dual.residual_vc;
    throw SolverError(msg.str());
  }

  report.iterations = iterations;
  report.termination = Termination::tolerance;
  report.best_objective = out.relaxed_objective;
  report.best_x = out.allocation.t;
  report.best_x.insert(report.best_x.end(), out.allocation.vc.begin(), out.allocation.vc.end());
  out.report = std::move(report);
  out.objective = evaluate_special(s, out.allocation).total;
  return out;
}

}  // namespace meco

#endif  // MECO_CLOSED_FORM_HPP
