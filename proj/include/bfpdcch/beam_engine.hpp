#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "bfpdcch/common.hpp"

namespace bfpdcch::beam {

// Uniform rectangular panel array (Mg, Ng, M, N, P). Only single-panel
// configurations carry beam math; polarizations duplicate the co-polar aperture.
struct UraConfig {
  int panels_vertical = 1;
  int panels_horizontal = 1;
  int elements_vertical = 4;    // M
  int elements_horizontal = 8;  // N
  int polarizations = 2;        // 1 or 2
  double spacing_vertical = 0.0;    // dz [m]
  double spacing_horizontal = 0.0;  // dy [m]
  double wavelength = 0.0;          // [m]
  // Vertical progression: kPrinted uses cos(phi) sin(theta), kConventional cos(theta).
  enum class ZForm { kPrinted, kConventional } z_form = ZForm::kPrinted;

  // Half-wavelength spaced array at the given carrier.
  static UraConfig at_carrier(double carrier_hz, int m = 4, int n = 8, int pol = 2) {
    UraConfig c;
    c.elements_vertical = m;
    c.elements_horizontal = n;
    c.polarizations = pol;
    c.wavelength = kSpeedOfLight / carrier_hz;
    c.spacing_vertical = c.wavelength / 2.0;
    c.spacing_horizontal = c.wavelength / 2.0;
    return c;
  }

  double wavenumber() const { return 2.0 * kPi / wavelength; }
  int co_polar_elements() const { return elements_vertical * elements_horizontal; }
  int total_elements() const {
    return panels_vertical * panels_horizontal * co_polar_elements() * polarizations;
  }

  void validate() const {
    if (panels_vertical < 1 || panels_horizontal < 1 || elements_vertical < 1 || elements_horizontal < 1)
      throw Error("UraConfig: element and panel counts must be >= 1");
    if (polarizations != 1 && polarizations != 2) throw Error("UraConfig: polarization must be 1 or 2");
    if (!(spacing_vertical > 0) || !(spacing_horizontal > 0) || !(wavelength > 0))
      throw Error("UraConfig: spacings and wavelength must be positive");
  }
};

struct SteeringDirection {
  double azimuth = 0.0;         // phi0, from the array boresight (x axis)
  double elevation = kPi / 2;   // theta0, from the z axis
};

struct PhaseExcitation {
  double beta_y = 0.0;
  double beta_z = 0.0;
};

struct Beam {
  int id = 1;  // 1-based
  SteeringDirection direction;
  PhaseExcitation phase;
  CVec weights;  // total_elements() entries, polarization-major then (m, n) row-major
};

struct BeamSet {
  std::vector<Beam> beams;
  std::size_t size() const { return beams.size(); }
  const Beam& operator[](std::size_t i) const { return beams[i]; }
};

// Per-element phase progressions along z (rows, m) and y (columns, n) for a
// plane wave arriving from (phi, theta). By default the z term is
// cos(phi) sin(theta), which is how the array factor of this library is defined.
struct AxisPhase {
  double z;
  double y;
};

inline AxisPhase axis_phase(const UraConfig& cfg, double phi, double theta) {
  const double k = cfg.wavenumber();
  const double z_dir = cfg.z_form == UraConfig::ZForm::kPrinted ? std::cos(phi) * std::sin(theta) : std::cos(theta);
  return {k * cfg.spacing_vertical * z_dir, k * cfg.spacing_horizontal * std::sin(phi) * std::sin(theta)};
}

// Phases that cancel the per-element progression at the steering direction.
inline PhaseExcitation phase_excitations(const UraConfig& cfg, const SteeringDirection& dir) {
  cfg.validate();
  const auto p = axis_phase(cfg, dir.azimuth, dir.elevation);
  return {-p.y, -p.z};
}

inline cplx array_factor(const UraConfig& cfg, double beta_y, double beta_z, double phi, double theta) {
  cfg.validate();
  const auto p = axis_phase(cfg, phi, theta);
  const double psi_z = p.z + beta_z;
  const double psi_y = p.y + beta_y;
  cplx col_sum{0.0, 0.0};
  for (int n = 0; n < cfg.elements_horizontal; ++n) col_sum += std::polar(1.0, n * psi_y);
  cplx row_sum{0.0, 0.0};
  for (int m = 0; m < cfg.elements_vertical; ++m) row_sum += std::polar(1.0, m * psi_z);
  return row_sum * col_sum;
}

inline cplx array_factor(const UraConfig& cfg, const PhaseExcitation& ph, double phi, double theta) {
  return array_factor(cfg, ph.beta_y, ph.beta_z, phi, theta);
}

// Steering phasor a(phi, theta) of the full aperture. A channel made of this
// single ray gives h . w_i = scale * AF_i(phi, theta).
inline CVec steering_vector(const UraConfig& cfg, double phi, double theta) {
  const auto p = axis_phase(cfg, phi, theta);
  const int M = cfg.elements_vertical;
  const int N = cfg.elements_horizontal;
  CVec a(static_cast<std::size_t>(cfg.total_elements()));
  std::size_t idx = 0;
  const int copies = cfg.total_elements() / (M * N);
  for (int c = 0; c < copies; ++c)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) a[idx++] = std::polar(1.0, m * p.z + n * p.y);
  return a;
}

// Weight vector of beam `beam_index` (1-based, at most `beam_count`) steered to
// `dir`: unit-modulus phase taper exp(j((m-1) beta_z + (n-1) beta_y)), scaled
// so the squared norm is power_budget / beam_count.
inline Beam beam_weights(const UraConfig& cfg, int beam_index, int beam_count, const SteeringDirection& dir,
                         double power_budget = 1.0) {
  cfg.validate();
  if (beam_count < 1 || beam_index < 1 || beam_index > beam_count)
    throw Error("beam_weights: beam index " + std::to_string(beam_index) + " outside 1.." +
                std::to_string(beam_count));
  Beam b;
  b.id = beam_index;
  b.direction = dir;
  b.phase = phase_excitations(cfg, dir);
  const int M = cfg.elements_vertical;
  const int N = cfg.elements_horizontal;
  const auto total = static_cast<std::size_t>(cfg.total_elements());
  const double scale = std::sqrt(power_budget / beam_count / static_cast<double>(total));
  b.weights.resize(total);
  std::size_t idx = 0;
  const int copies = cfg.total_elements() / (M * N);
  for (int c = 0; c < copies; ++c)
    for (int m = 0; m < M; ++m)
      for (int n = 0; n < N; ++n) b.weights[idx++] = scale * std::polar(1.0, m * b.phase.beta_z + n * b.phase.beta_y);
  return b;
}

inline BeamSet make_beam_set(const UraConfig& cfg, std::span<const SteeringDirection> dirs, double power_budget = 1.0) {
  if (dirs.empty()) throw Error("make_beam_set: no directions");
  BeamSet set;
  const int count = static_cast<int>(dirs.size());
  for (int i = 0; i < count; ++i) set.beams.push_back(beam_weights(cfg, i + 1, count, dirs[i], power_budget));
  return set;
}

// Grid of beams: every azimuth crossed with every elevation, azimuth-major
// within each elevation ring (adjacent ids are azimuth neighbours).
inline std::vector<SteeringDirection> direction_grid(std::span<const double> azimuths,
                                                     std::span<const double> elevations) {
  std::vector<SteeringDirection> out;
  for (double el : elevations)
    for (double az : azimuths) out.push_back({az, el});
  return out;
}

inline CVec precode(cplx symbol, const Beam& beam) {
  CVec out(beam.weights.size());
  std::transform(beam.weights.begin(), beam.weights.end(), out.begin(), [&](cplx w) { return w * symbol; });
  return out;
}

// h . w without conjugation: the received sample for a unit symbol.
inline cplx project(std::span<const cplx> h, std::span<const cplx> w) {
  if (h.size() != w.size()) throw Error("project: channel and weight lengths differ");
  cplx acc{0.0, 0.0};
  for (std::size_t i = 0; i < h.size(); ++i) acc += h[i] * w[i];
  return acc;
}

inline double squared_norm(std::span<const cplx> v) {
  double s = 0.0;
  for (auto z : v) s += std::norm(z);
  return s;
}

struct PatternSample {
  int beam_id;
  double azimuth;
  double gain_db;
};

// |AF|^2 of each beam over an azimuth cut, normalized to that beam's peak on
// the grid. Evaluated from the actual weights so any common phase cancels.
inline std::vector<PatternSample> radiation_pattern(const UraConfig& cfg, const BeamSet& beams,
                                                    std::span<const double> azimuth_grid, double theta) {
  if (azimuth_grid.empty()) throw Error("radiation_pattern: empty azimuth grid");
  std::vector<PatternSample> out;
  out.reserve(beams.size() * azimuth_grid.size());
  std::vector<double> gains(azimuth_grid.size());
  for (const auto& b : beams.beams) {
    double peak = 0.0;
    for (std::size_t i = 0; i < azimuth_grid.size(); ++i) {
      const auto a = steering_vector(cfg, azimuth_grid[i], theta);
      gains[i] = std::norm(project(a, b.weights));
      peak = std::max(peak, gains[i]);
    }
    for (std::size_t i = 0; i < azimuth_grid.size(); ++i) {
      const double rel = peak > 0 ? gains[i] / peak : 1.0;
      out.push_back({b.id, azimuth_grid[i], rel > 0 ? lin_to_db(rel) : -300.0});
    }
  }
  return out;
}

// Highest side lobe (dB relative to the main lobe) of one beam's sampled cut.
// Side lobes are the local maxima outside the main lobe, which is delimited by
// the first local minima on either side of the peak.
inline double peak_side_lobe_db(std::span<const double> gain_db) {
  if (gain_db.size() < 3) return -300.0;
  const auto peak_it = std::max_element(gain_db.begin(), gain_db.end());
  const auto peak = static_cast<std::size_t>(peak_it - gain_db.begin());
  std::size_t lo = peak, hi = peak;
  while (lo > 0 && gain_db[lo - 1] <= gain_db[lo]) --lo;
  while (hi + 1 < gain_db.size() && gain_db[hi + 1] <= gain_db[hi]) ++hi;
  double worst = -300.0;
  for (std::size_t i = 0; i < gain_db.size(); ++i)
    if (i < lo || i > hi) worst = std::max(worst, gain_db[i]);
  return worst - *peak_it;
}

// 3D antenna element pattern (dBi): 65 degree beamwidths, 30 dB floors, 8 dBi.
inline double element_pattern_db(double phi, double theta) {
  const double phi_deg = rad_to_deg(wrap_angle(phi));
  const double theta_deg = rad_to_deg(theta);
  const double vertical = -std::min(12.0 * std::pow((theta_deg - 90.0) / 65.0, 2), 30.0);
  const double horizontal = -std::min(12.0 * std::pow(phi_deg / 65.0, 2), 30.0);
  return 8.0 - std::min(-(vertical + horizontal), 30.0);
}

// Legacy single-antenna sector pattern (dBi): 70 degree beamwidth, 20 dB floor, 14 dBi.
inline double sector_pattern_db(double phi) {
  const double phi_deg = rad_to_deg(wrap_angle(phi));
  return 14.0 - std::min(12.0 * std::pow(phi_deg / 70.0, 2), 20.0);
}

}  // namespace bfpdcch::beam
