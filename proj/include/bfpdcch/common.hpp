#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace bfpdcch {

using cplx = std::complex<double>;
using CVec = std::vector<cplx>;

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kSpeedOfLight = 299792458.0;

// Library-wide error type. Everything thrown by the library derives from it.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Aggregation level: number of CCEs a DCI is rate matched onto.
enum class Al : std::uint8_t { L1 = 1, L2 = 2, L4 = 4, L8 = 8 };

inline constexpr std::array<Al, 4> kAllAls = {Al::L1, Al::L2, Al::L4, Al::L8};

constexpr int cces(Al al) noexcept { return static_cast<int>(al); }

constexpr int al_index(Al al) noexcept {
  switch (al) {
    case Al::L1: return 0;
    case Al::L2: return 1;
    case Al::L4: return 2;
    case Al::L8: return 3;
  }
  return 0;
}

inline Al al_from_int(int v) {
  switch (v) {
    case 1: return Al::L1;
    case 2: return Al::L2;
    case 4: return Al::L4;
    case 8: return Al::L8;
    default: throw Error("invalid aggregation level " + std::to_string(v));
  }
}

// std::nullopt means outage: not even AL 8 closes the link.
using AlOrOutage = std::optional<Al>;

inline double db_to_lin(double db) { return std::pow(10.0, db / 10.0); }
inline double lin_to_db(double lin) { return 10.0 * std::log10(lin); }
inline double deg_to_rad(double deg) { return deg * kPi / 180.0; }
inline double rad_to_deg(double rad) { return rad * 180.0 / kPi; }

// Wraps an angle into [-pi, pi).
inline double wrap_angle(double a) {
  a = std::fmod(a + kPi, 2.0 * kPi);
  if (a < 0) a += 2.0 * kPi;
  return a - kPi;
}

}  // namespace bfpdcch
