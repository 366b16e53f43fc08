#ifndef MECO_CHANNEL_HPP
#define MECO_CHANNEL_HPP

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numbers>
#include <variant>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "meco/error.hpp"
#include "meco/rng.hpp"
#include "meco/scenario.hpp"

namespace meco::channel {

/// Distributional description of a Rayleigh-faded uplink: the per-slot SNR
/// is mean_snr * X with X ~ Exp(1).
struct ChannelStats {
  double mean_snr = 0.0;   ///< linear
  double bandwidth = 0.0;  ///< Hz
};

/// Average received SNR p * d^-n / (N0 * B).
inline double mean_snr(double tx_power, double distance, double pathloss_exp, double noise_density,
                       double bandwidth) {
  if (!(distance > 0.0)) throw ValidationError("distance must be > 0");
  if (!(tx_power > 0.0) || !(noise_density > 0.0) || !(bandwidth > 0.0) || !(pathloss_exp > 0.0))
    throw ValidationError("tx_power, noise_density, bandwidth and pathloss_exp must be > 0");
  return tx_power * std::pow(distance, -pathloss_exp) / (noise_density * bandwidth);
}

/// Shannon rate B * log2(1 + snr) of one slot.
inline double instantaneous_rate(double snr, double bandwidth) {
  if (!(snr >= 0.0)) throw ValidationError("snr must be >= 0");
  return bandwidth * std::log2(1.0 + snr);
}

struct Quadrature {
  double rel_tol = 1e-10;
};

struct MonteCarlo {
  std::uint64_t seed = 0;
  std::size_t samples = 1'000'000;
};

using RateMethod = std::variant<Quadrature, MonteCarlo>;

/// E[B log2(1 + snr * X)], X ~ Exp(1).
inline double expected_rate(const ChannelStats& stats, const RateMethod& method = Quadrature{}) {
  if (!(stats.mean_snr >= 0.0) || !std::isfinite(stats.mean_snr))
    throw ValidationError("mean_snr must be finite and >= 0");
  if (!(stats.bandwidth > 0.0)) throw ValidationError("bandwidth must be > 0");

  if (const auto* mc = std::get_if<MonteCarlo>(&method)) {
    if (mc->samples == 0) throw ValidationError("monte_carlo samples must be >= 1");
    if (stats.mean_snr == 0.0) return 0.0;
    CounterRng rng(mc->seed, streams::channel_mc);
    double sum = 0.0;
    for (std::size_t i = 0; i < mc->samples; ++i) sum += std::log1p(stats.mean_snr * rng.exponential());
    return stats.bandwidth * (sum / static_cast<double>(mc->samples)) / std::numbers::ln2;
  }

  if (stats.mean_snr == 0.0) return 0.0;
  const double tol = std::get<Quadrature>(method).rel_tol;
  const double g = stats.mean_snr;
  boost::math::quadrature::exp_sinh<double> integrator;
  const double nats = integrator.integrate([g](double x) { return std::log1p(g * x) * std::exp(-x); }, 0.0,
                                           std::numeric_limits<double>::infinity(), tol);
  return stats.bandwidth * nats / std::numbers::ln2;
}

/// Channel statistics of a device under the shared system parameters.
inline ChannelStats stats_for(const DeviceProfile& device, const SystemParams& params) {
  if (!device.distance) throw ValidationError("device distance is required to derive channel statistics");
  return {mean_snr(params.tx_power, *device.distance, params.pathloss_exp, params.noise_density, params.bandwidth),
          params.bandwidth};
}

/// Fills avg_rate from distance (by quadrature) for every device that lacks one.
inline Scenario attach_expected_rates(const Scenario& scenario) {
  const SystemParams& params = scenario.params();
  return transform_devices(scenario, [&](std::size_t k, DeviceProfile& d) {
    if (d.avg_rate) return;
    if (!d.distance)
      throw ValidationError("devices[" + std::to_string(k) + "] needs avg_rate or distance");
    d.avg_rate = expected_rate(stats_for(d, params));
  });
}

/// Multiplies every device's average rate by `factor`.
inline Scenario scale_rates(const Scenario& scenario, double factor) {
  return transform_devices(scenario, [&](std::size_t, DeviceProfile& d) { d.avg_rate = d.rate() * factor; });
}

struct TransmissionTrace {
  std::size_t slots_used = 0;  ///< frames in which the device transmitted
  double elapsed = 0.0;        ///< seconds
  double bits_sent = 0.0;
};

/// Sends `bits` over a TDMA share `slot_fraction` of frames of length
/// `slot_len`, drawing an i.i.d. rate per frame. The last frame is credited
/// fractionally (fluid model), so a constant rate r gives exactly bits/(t r).
template <class RateDraw>
TransmissionTrace transmit_once(double bits, double slot_fraction, RateDraw&& draw, double slot_len,
                                CounterRng& rng, std::size_t max_slots = 1'000'000'000) {
  TransmissionTrace trace;
  double remaining = bits;
  while (remaining > 0.0) {
    if (trace.slots_used >= max_slots) throw SolverError("transmission did not complete within max_slots");
    const double per_frame = slot_fraction * slot_len * draw(rng);
    ++trace.slots_used;
    if (per_frame >= remaining) {
      trace.elapsed += slot_len * remaining / per_frame;
      trace.bits_sent += remaining;
      remaining = 0.0;
    } else {
      trace.elapsed += slot_len;
      trace.bits_sent += per_frame;
      remaining -= per_frame;
    }
  }
  return trace;
}

/// Mean completion time over `trials` independent transmissions; trial i
/// draws from stream (seed, i).
template <class RateDraw>
double simulate_transmission(double bits, double slot_fraction, RateDraw&& draw, double slot_len,
                             std::uint64_t seed, std::size_t trials) {
  if (!(bits >= 0.0)) throw ValidationError("bits must be >= 0");
  if (!(slot_fraction > 0.0 && slot_fraction <= 1.0))
    throw ValidationError("slot fraction must lie in (0, 1]; a zero share never completes");
  if (!(slot_len > 0.0)) throw ValidationError("slot_len must be > 0");
  if (trials == 0) throw ValidationError("trials must be >= 1");
  if (bits == 0.0) return 0.0;

  double total = 0.0;
  for (std::size_t i = 0; i < trials; ++i) {
    CounterRng rng(seed, streams::channel_trial(i));
    total += transmit_once(bits, slot_fraction, draw, slot_len, rng).elapsed;
  }
  return total / static_cast<double>(trials);
}

/// Rayleigh-fading specialization.
inline double simulate_transmission(double bits, double slot_fraction, const ChannelStats& stats, double slot_len,
                                    std::uint64_t seed, std::size_t trials) {
  if (!(stats.mean_snr > 0.0)) throw ValidationError("mean_snr must be > 0 for the transmission to complete");
  const auto draw = [&stats](CounterRng& rng) {
    return stats.bandwidth * std::log2(1.0 + stats.mean_snr * rng.exponential());
  };
  return simulate_transmission(bits, slot_fraction, draw, slot_len, seed, trials);
}

}  // namespace meco::channel

#endif  // MECO_CHANNEL_HPP
