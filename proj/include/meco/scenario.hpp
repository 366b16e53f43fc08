#ifndef MECO_SCENARIO_HPP
#define MECO_SCENARIO_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "meco/error.hpp"
#include "meco/rng.hpp"
#include "meco/units.hpp"

namespace meco {

/// One device's task and capabilities.
struct DeviceProfile {
  double weight = 1.0;              ///< relative importance (normalized by Scenario)
  double data_size = 0.0;           ///< raw payload, bits
  double local_capacity = 0.0;      ///< on-device compression throughput, bits/s
  std::optional<double> avg_rate;   ///< average uplink rate over fading, bits/s
  std::optional<double> distance;   ///< distance to the base station, m

  /// Average rate; throws when it has not been set or derived yet.
  double rate() const {
    if (!avg_rate) throw ValidationError("device avg_rate is not set (derive it from distance first)");
    return *avg_rate;
  }
};

/// Parameters shared by every device. Defaults follow the reference
/// simulation setup (10 MHz, -174 dBm/Hz, 24 dBm, path-loss exponent 4,
/// 40 Mbps of cloud compression, compression ratio 0.01, 250 m cell).
struct SystemParams {
  double cloud_capacity = units::mbps(40.0);
  double compression_ratio = 0.01;
  double bandwidth = units::mhz(10.0);
  double noise_density = units::dbm_to_watts(-174.0);
  double tx_power = units::dbm_to_watts(24.0);
  double pathloss_exp = 4.0;
  double cell_radius = 250.0;
  double min_distance = 10.0;
};

/// Validated, weight-normalized set of devices plus system parameters.
/// Immutable once built.
class Scenario {
 public:
  const std::vector<DeviceProfile>& devices() const { return devices_; }
  const DeviceProfile& device(std::size_t k) const { return devices_.at(k); }
  const DeviceProfile& operator[](std::size_t k) const { return devices_[k]; }
  const SystemParams& params() const { return params_; }
  std::size_t size() const { return devices_.size(); }

  /// Factor that was applied to the raw weights to make them sum to one.
  double weight_scale() const { return weight_scale_; }

  /// True when every device has an average rate.
  bool has_rates() const {
    for (const auto& d : devices_)
      if (!d.avg_rate) return false;
    return true;
  }

 private:
  Scenario(std::vector<DeviceProfile> devices, SystemParams params, double scale)
      : devices_(std::move(devices)), params_(params), weight_scale_(scale) {}

  friend Scenario validate_scenario(std::vector<DeviceProfile> devices, SystemParams params);

  std::vector<DeviceProfile> devices_;
  SystemParams params_;
  double weight_scale_ = 1.0;
};

namespace detail {

inline void require(bool ok, const std::string& field, const char* what) {
  if (!ok) throw ValidationError(field + " " + what);
}

inline void require_positive(double v, const std::string& field) {
  require(std::isfinite(v), field, "must be finite");
  require(v > 0.0, field, "must be > 0");
}

}  // namespace detail

/// Checks every invariant and renormalizes the weights to sum to one.
inline Scenario validate_scenario(std::vector<DeviceProfile> devices, SystemParams params) {
  using detail::require;
  using detail::require_positive;

  if (devices.empty()) throw ValidationError("devices must contain at least one device");

  require_positive(params.cloud_capacity, "params.cloud_capacity");
  require(std::isfinite(params.compression_ratio), "params.compression_ratio", "must be finite");
  require(params.compression_ratio > 0.0 && params.compression_ratio < 1.0, "params.compression_ratio",
          "must lie in (0, 1)");
  require_positive(params.bandwidth, "params.bandwidth");
  require_positive(params.noise_density, "params.noise_density");
  require_positive(params.tx_power, "params.tx_power");
  require(std::isfinite(params.pathloss_exp) && params.pathloss_exp >= 2.0, "params.pathloss_exp",
          "must be >= 2");
  require_positive(params.min_distance, "params.min_distance");
  require_positive(params.cell_radius, "params.cell_radius");
  require(params.cell_radius > params.min_distance, "params.cell_radius", "must exceed params.min_distance");

  double total = 0.0;
  for (std::size_t k = 0; k < devices.size(); ++k) {
    const auto& d = devices[k];
    const std::string prefix = "devices[" + std::to_string(k) + "].";
    require_positive(d.weight, prefix + "weight");
    require_positive(d.data_size, prefix + "data_size");
    require_positive(d.local_capacity, prefix + "local_capacity");
    if (d.avg_rate) require_positive(*d.avg_rate, prefix + "avg_rate");
    if (d.distance) require_positive(*d.distance, prefix + "distance");
    total += d.weight;
  }

  const double scale = 1.0 / total;
  for (auto& d : devices) d.weight *= scale;
  return Scenario(std::move(devices), params, scale);
}

/// Ranges for randomized devices. Defaults are the reference simulation's
/// Uniform[10, 100] Mbits and Uniform[0.5, 2] Mbps.
struct SamplingRanges {
  double data_size_lo = units::mbits(10.0);
  double data_size_hi = units::mbits(100.0);
  double local_capacity_lo = units::mbps(0.5);
  double local_capacity_hi = units::mbps(2.0);
};

/// Distance uniformly distributed over the annulus [min_distance, radius].
inline double sample_distance(CounterRng& rng, const SystemParams& params) {
  const double r0 = params.min_distance * params.min_distance;
  const double r1 = params.cell_radius * params.cell_radius;
  return std::sqrt(r0 + (r1 - r0) * rng.uniform());
}

/// K random devices with equal weights. Device k only depends on
/// (seed, k), so sample_scenario(K, s) is a prefix of sample_scenario(K', s)
/// for K' > K. Average rates are left unset; see channel::attach_expected_rates.
inline Scenario sample_scenario(std::size_t count, std::uint64_t seed, const SystemParams& params = {},
                                const SamplingRanges& ranges = {}) {
  if (count == 0) throw ValidationError("K must be >= 1");
  std::vector<DeviceProfile> devices;
  devices.reserve(count);
  for (std::size_t k = 0; k < count; ++k) {
    CounterRng rng(seed, streams::device(k));
    DeviceProfile d;
    d.weight = 1.0;
    d.data_size = rng.uniform(ranges.data_size_lo, ranges.data_size_hi);
    d.local_capacity = rng.uniform(ranges.local_capacity_lo, ranges.local_capacity_hi);
    d.distance = sample_distance(rng, params);
    devices.push_back(d);
  }
  return validate_scenario(std::move(devices), params);
}

/// Distance used for every device of the five-device base scenario; the
/// table lists only sizes and capacities.
inline constexpr double kBaseDistance = 100.0;

/// Five-device scenario: device 1 is configurable, devices 2-5 are fixed at
/// (90, 80, 70, 60) Mbits and (1.2, 1.3, 1.4, 1.5) Mbps.
inline Scenario base_scenario(double data_size_1, double local_capacity_1, const SystemParams& params = {}) {
  constexpr double kEps = 1e-9;
  if (!(data_size_1 >= units::mbits(10.0) * (1 - kEps) && data_size_1 <= units::mbits(100.0) * (1 + kEps)))
    throw ValidationError("device 1 data_size must lie in [10, 100] Mbits");
  if (!(local_capacity_1 >= units::mbps(0.5) * (1 - kEps) && local_capacity_1 <= units::mbps(2.0) * (1 + kEps)))
    throw ValidationError("device 1 local_capacity must lie in [0.5, 2] Mbps");

  const double sizes[] = {data_size_1, units::mbits(90), units::mbits(80), units::mbits(70), units::mbits(60)};
  const double caps[] = {local_capacity_1, units::mbps(1.2), units::mbps(1.3), units::mbps(1.4), units::mbps(1.5)};
  std::vector<DeviceProfile> devices(5);
  for (std::size_t k = 0; k < 5; ++k) {
    devices[k].weight = 1.0;
    devices[k].data_size = sizes[k];
    devices[k].local_capacity = caps[k];
    devices[k].distance = kBaseDistance;
  }
  return validate_scenario(std::move(devices), params);
}

/// Copy of a scenario with a per-device transform applied, re-validated.
template <class Fn>
Scenario transform_devices(const Scenario& s, Fn&& fn) {
  std::vector<DeviceProfile> devices = s.devices();
  for (std::size_t k = 0; k < devices.size(); ++k) fn(k, devices[k]);
  return validate_scenario(std::move(devices), s.params());
}

}  // namespace meco

#endif  // MECO_SCENARIO_HPP
