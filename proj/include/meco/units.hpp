#ifndef MECO_UNITS_HPP
#define MECO_UNITS_HPP

#include <cmath>

// Everything inside the library is SI: bits, bits/s, Hz, W, W/Hz, m, s.
// These helpers convert at the boundary.
namespace meco::units {

constexpr double mbits(double v) { return v * 1e6; }
constexpr double mbps(double v) { return v * 1e6; }
constexpr double mhz(double v) { return v * 1e6; }

constexpr double to_mbits(double bits) { return bits * 1e-6; }
constexpr double to_mbps(double bps) { return bps * 1e-6; }
constexpr double to_mhz(double hz) { return hz * 1e-6; }

inline double dbm_to_watts(double dbm) { return 1e-3 * std::pow(10.0, dbm / 10.0); }
inline double watts_to_dbm(double w) { return 10.0 * std::log10(w / 1e-3); }

}  // namespace meco::units

#endif  // MECO_UNITS_HPP
