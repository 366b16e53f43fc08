#ifndef MECO_DELAY_HPP
#define MECO_DELAY_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <string_view>
#include <vector>

#include "meco/error.hpp"
#include "meco/scenario.hpp"

namespace meco {

/// A completion time that may be unbounded. A device with no uplink share
/// (or no cloud share while it still offloads raw data) never finishes;
/// that case is a distinct state, not an overflowed double.
class Delay {
 public:
  static constexpr Delay finite(double seconds) { return Delay(seconds, false); }
  static constexpr Delay infinite() { return Delay(0.0, true); }

  constexpr bool is_finite() const { return !infinite_; }
  constexpr bool is_infinite() const { return infinite_; }

  double seconds() const {
    if (infinite_) throw SolverError("delay is infinite (starved device)");
    return seconds_;
  }

  /// Seconds, with +inf standing in for the infinite state. For
  /// comparisons and printing only.
  constexpr double value_or_inf() const {
    return infinite_ ? std::numeric_limits<double>::infinity() : seconds_;
  }

  friend constexpr bool operator==(const Delay&, const Delay&) = default;

 private:
  constexpr Delay(double s, bool inf) : seconds_(s), infinite_(inf) {}
  double seconds_;
  bool infinite_;
};

/// Which pipelining case of the partial model applies: local compression
/// outlasts the raw upload (device-bound) or not (channel-bound).
enum class Branch { device_bound, channel_bound };

/// Which piece of the optimal-segmentation delay is active. `compute_limited`
/// is t R >= sqrt(beta Vd Vc) (the cloud/device compute is the bottleneck);
/// `channel_limited` is the other side.
enum class SegmentationCase { compute_limited, channel_limited };

struct DelayBreakdown {
  double comp_d = 0.0;  ///< local compression
  double tran_d = 0.0;  ///< upload of the locally compressed part
  double tran_c = 0.0;  ///< upload of the raw part
  double comp_c = 0.0;  ///< cloud compression of the raw part
  Delay total = Delay::finite(0.0);
  Branch branch = Branch::device_bound;
};

enum class Model { local, edge, partial, partial_special };

inline std::string_view to_string(Model m) {
  switch (m) {
    case Model::local: return "local";
    case Model::edge: return "edge";
    case Model::partial: return "partial";
    case Model::partial_special: return "partial-special";
  }
  return "?";
}

inline std::string_view to_string(Branch b) {
  return b == Branch::device_bound ? "device-bound" : "channel-bound";
}

/// Per-device decision: TDMA share t, cloud capacity vc (bits/s) and the
/// locally compressed fraction lambda.
struct Allocation {
  Model model = Model::partial;
  std::vector<double> t;
  std::vector<double> vc;
  std::vector<double> lambda;

  std::size_t size() const { return t.size(); }
};

/// Throws ValidationError when the allocation breaks a resource constraint.
inline void check_allocation(const Scenario& s, const Allocation& a, double tol = 1e-9) {
  const std::size_t k = s.size();
  if (a.t.size() != k || a.vc.size() != k || a.lambda.size() != k)
    throw ValidationError("allocation size does not match the scenario");
  double st = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    if (!(a.t[i] >= 0.0)) throw ValidationError("allocation.t[" + std::to_string(i) + "] must be >= 0");
    if (!(a.vc[i] >= 0.0)) throw ValidationError("allocation.vc[" + std::to_string(i) + "] must be >= 0");
    if (!(a.lambda[i] >= 0.0 && a.lambda[i] <= 1.0))
      throw ValidationError("allocation.lambda[" + std::to_string(i) + "] must lie in [0, 1]");
    st += a.t[i];
    sv += a.vc[i];
  }
  if (st > 1.0 + tol) throw ValidationError("allocation uses more than the whole frame (sum t > 1)");
  if (sv > s.params().cloud_capacity * (1.0 + tol))
    throw ValidationError("allocation exceeds the cloud capacity (sum vc > V^c)");
}

// Closed forms in terms of capacities: comm = t R (bits/s), device = Vd,
// cloud = Vc, beta = compression ratio, size = L.
namespace formulas {

inline double boundary(double device, double cloud, double beta) { return std::sqrt(beta * device * cloud); }

inline double lambda_compute_limited(double comm, double device, double cloud, double beta) {
  return device * (comm + cloud) / (device * cloud * (1.0 + beta) + comm * (device + cloud));
}

inline double lambda_channel_limited(double comm, double device) { return device / (device + comm); }

/// Optimal-segmentation delay when comm >= boundary.
inline double delay_compute_limited(double size, double comm, double device, double cloud, double beta) {
  return size / comm * ((comm + cloud) * (comm + beta * device)) /
         (device * cloud * (1.0 + beta) + comm * (device + cloud));
}

/// Optimal-segmentation delay when comm < boundary. Independent of cloud.
inline double delay_channel_limited(double size, double comm, double device, double beta) {
  return size / comm * (comm + beta * device) / (device + comm);
}

inline double special_lambda(double comm, double device, double cloud) {
  return device * (comm + cloud) / (device * cloud + comm * (device + cloud));
}

inline double special_delay(double size, double comm, double device, double cloud) {
  return size * (comm + cloud) / (device * cloud + comm * (device + cloud));
}

}  // namespace formulas

namespace detail {

inline void require_device(const DeviceProfile& d) {
  if (!(d.data_size > 0.0) || !(d.local_capacity > 0.0)) throw ValidationError("device data_size and local_capacity must be > 0");
  if (!(d.rate() > 0.0)) throw ValidationError("device avg_rate must be > 0");
}

inline void require_beta(double beta) {
  if (!(beta > 0.0 && beta < 1.0)) throw ValidationError("compression_ratio must lie in (0, 1)");
}

}  // namespace detail

/// Local compression then upload of beta L bits.
inline Delay local_delay(const DeviceProfile& dev, double beta, double t) {
  detail::require_device(dev);
  if (!(beta >= 0.0 && beta < 1.0)) throw ValidationError("compression_ratio must lie in [0, 1)");
  if (!(t >= 0.0)) throw ValidationError("t must be >= 0");
  const double L = dev.data_size;
  if (beta == 0.0) return Delay::finite(L / dev.local_capacity);
  if (t == 0.0) return Delay::infinite();
  return Delay::finite(L / dev.local_capacity + beta * L / (t * dev.rate()));
}

/// Raw upload then cloud compression.
inline Delay edge_delay(const DeviceProfile& dev, double t, double vc) {
  detail::require_device(dev);
  if (!(t >= 0.0) || !(vc >= 0.0)) throw ValidationError("t and vc must be >= 0");
  if (t == 0.0 || vc == 0.0) return Delay::infinite();
  const double L = dev.data_size;
  return Delay::finite(L / (t * dev.rate()) + L / vc);
}

/// The four component delays of a lambda split, combined by the pipelining
/// rule: local-part upload may start only once both the local compression
/// and the raw upload are done.
inline DelayBreakdown partial_delay(const DeviceProfile& dev, double beta, double t, double vc, double lambda) {
  detail::require_device(dev);
  detail::require_beta(beta);
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw ValidationError("lambda must lie in [0, 1]");
  if (!(t >= 0.0) || !(vc >= 0.0)) throw ValidationError("t and vc must be >= 0");

  constexpr double inf = std::numeric_limits<double>::infinity();
  const double L = dev.data_size;
  const double comm = t * dev.rate();
  const double raw = 1.0 - lambda;

  DelayBreakdown out;
  out.comp_d = lambda * L / dev.local_capacity;
  out.tran_d = lambda == 0.0 ? 0.0 : (comm == 0.0 ? inf : beta * lambda * L / comm);
  out.tran_c = raw == 0.0 ? 0.0 : (comm == 0.0 ? inf : raw * L / comm);
  out.comp_c = raw == 0.0 ? 0.0 : (vc == 0.0 ? inf : raw * L / vc);

  if (out.comp_d >= out.tran_c) {
    out.branch = Branch::device_bound;
    const double total = std::max(out.comp_d + out.tran_d, out.tran_c + out.comp_c);
    out.total = std::isinf(total) ? Delay::infinite() : Delay::finite(total);
  } else {
    out.branch = Branch::channel_bound;
    const double total = out.tran_c + std::max(out.tran_d, out.comp_c);
    out.total = std::isinf(total) ? Delay::infinite() : Delay::finite(total);
  }
  return out;
}

namespace detail {

inline void require_positive_resources(double t, double vc) {
  if (!(t > 0.0) || !std::isfinite(t)) throw ValidationError("t must be > 0");
  if (!(vc > 0.0) || !std::isfinite(vc)) throw ValidationError("vc must be > 0");
}

}  // namespace detail

inline SegmentationCase segmentation_case(const DeviceProfile& dev, double beta, double t, double vc) {
  return t * dev.rate() >= formulas::boundary(dev.local_capacity, vc, beta) ? SegmentationCase::compute_limited
                                                                            : SegmentationCase::channel_limited;
}

/// Delay-minimizing local fraction for fixed (t, vc).
inline double optimal_lambda(const DeviceProfile& dev, double beta, double t, double vc) {
  detail::require_device(dev);
  detail::require_beta(beta);
  detail::require_positive_resources(t, vc);
  const double comm = t * dev.rate();
  return segmentation_case(dev, beta, t, vc) == SegmentationCase::compute_limited
             ? formulas::lambda_compute_limited(comm, dev.local_capacity, vc, beta)
             : formulas::lambda_channel_limited(comm, dev.local_capacity);
}

struct PartialOptimum {
  double delay = 0.0;  ///< seconds
  SegmentationCase segment = SegmentationCase::compute_limited;
  double lambda = 0.0;
};

/// Delay at the optimal split, piecewise in t R vs sqrt(beta Vd Vc).
inline PartialOptimum optimal_partial_delay(const DeviceProfile& dev, double beta, double t, double vc) {
  detail::require_device(dev);
  detail::require_beta(beta);
  detail::require_positive_resources(t, vc);
  const double comm = t * dev.rate();
  const double L = dev.data_size;
  const double vd = dev.local_capacity;
  PartialOptimum out;
  out.segment = segmentation_case(dev, beta, t, vc);
  if (out.segment == SegmentationCase::compute_limited) {
    out.delay = formulas::delay_compute_limited(L, comm, vd, vc, beta);
    out.lambda = formulas::lambda_compute_limited(comm, vd, vc, beta);
  } else {
    out.delay = formulas::delay_channel_limited(L, comm, vd, beta);
    out.lambda = formulas::lambda_channel_limited(comm, vd);
  }
  return out;
}

struct SpecialCaseResult {
  double lambda = 1.0;
  Delay delay = Delay::finite(0.0);
};

/// Split and delay when the upload of locally compressed data is negligible:
/// local compression time equals raw upload plus cloud compression time.
inline SpecialCaseResult special_case(const DeviceProfile& dev, double t, double vc) {
  detail::require_device(dev);
  if (!(t >= 0.0) || !(vc >= 0.0)) throw ValidationError("t and vc must be >= 0");
  const double comm = t * dev.rate();
  if (comm == 0.0 && vc == 0.0) return {1.0, Delay::infinite()};
  const double vd = dev.local_capacity;
  return {formulas::special_lambda(comm, vd, vc), Delay::finite(formulas::special_delay(dev.data_size, comm, vd, vc))};
}

struct SystemDelay {
  Delay total = Delay::finite(0.0);  ///< weighted sum over devices
  std::vector<DelayBreakdown> devices;
};

/// Weighted system delay of an allocation, evaluated through the
/// pipelined model with the allocation's own lambda.
inline SystemDelay evaluate(const Scenario& s, const Allocation& a) {
  check_allocation(s, a);
  SystemDelay out;
  out.devices.reserve(s.size());
  double sum = 0.0;
  bool starved = false;
  for (std::size_t k = 0; k < s.size(); ++k) {
    const auto b = partial_delay(s[k], s.params().compression_ratio, a.t[k], a.vc[k], a.lambda[k]);
    if (b.total.is_infinite())
      starved = true;
    else
      sum += s[k].weight * b.total.seconds();
    out.devices.push_back(b);
  }
  out.total = starved ? Delay::infinite() : Delay::finite(sum);
  return out;
}

}  // namespace meco

#endif  // MECO_DELAY_HPP
