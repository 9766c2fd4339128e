#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "bfpdcch/beam_engine.hpp"
#include "bfpdcch/common.hpp"
#include "bfpdcch/random.hpp"

namespace bfpdcch::deploy {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
  Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
  Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
  Vec2 operator*(double s) const { return {x * s, y * s}; }
  double norm() const { return std::hypot(x, y); }
};

inline Vec2 rotate(Vec2 v, double a) {
  const double c = std::cos(a), s = std::sin(a);
  return {c * v.x - s * v.y, s * v.x + c * v.y};
}

// Hexagonal 7-site, 3-sector layout on a wrap-around torus.
struct NetworkLayout {
  int sites = 7;
  int sectors_per_site = 3;
  double isd = 500.0;
  double bs_height = 25.0;
  double ue_height = 1.5;
  double carrier_hz = 2.4e9;
  double tx_power_dbm = 44.0;
  double bandwidth_hz = 20e6;
  double noise_figure_db = 9.0;
  double min_distance = 35.0;  // 2D BS-UE
  double rotation = 0.0;       // rigid rotation of the whole layout
  bool wrap_around = true;

  int sector_count() const { return sites * sectors_per_site; }
  double tx_power_w() const { return db_to_lin(tx_power_dbm - 30.0); }
  // Thermal noise over the full band plus the UE noise figure [W].
  double noise_power_w() const { return db_to_lin(-174.0 + lin_to_db(bandwidth_hz) + noise_figure_db - 30.0); }

  void validate() const {
    if (sites != 7 || sectors_per_site != 3) throw Error("NetworkLayout: only the 7-site, 3-sector layout is supported");
    if (!(isd > 0) || !(bs_height > ue_height) || !(carrier_hz > 0) || !(bandwidth_hz > 0))
      throw Error("NetworkLayout: invalid geometry or carrier");
  }

  Vec2 site_position(int site) const {
    if (site == 0) return rotate({0.0, 0.0}, rotation);
    const double a = deg_to_rad(60.0 * (site - 1));
    return rotate({isd * std::cos(a), isd * std::sin(a)}, rotation);
  }

  double sector_boresight(int sector_in_site) const { return wrap_angle(deg_to_rad(30.0 + 120.0 * sector_in_site) + rotation); }

  // Translations of the 7-site cluster that tile the plane.
  std::array<Vec2, 7> wrap_translations() const {
    const Vec2 u = rotate(Vec2{2.5, std::sqrt(3.0) / 2.0} * isd, rotation);
    const Vec2 v = rotate(Vec2{0.5, 1.5 * std::sqrt(3.0)} * isd, rotation);
    return {Vec2{0, 0}, u, u * -1.0, v, v * -1.0, u - v, v - u};
  }

  // Position of the site copy closest to `p` (the site itself without wrap-around).
  Vec2 site_image(int site, Vec2 p) const {
    const Vec2 s = site_position(site);
    if (!wrap_around) return s;
    Vec2 best = s;
    double best_d = (p - s).norm();
    for (const auto& t : wrap_translations()) {
      const Vec2 c = s + t;
      const double d = (p - c).norm();
      if (d < best_d - 1e-9) {
        best_d = d;
        best = c;
      }
    }
    return best;
  }

  // Hexagonal cell of `site`: corners at 30 + 60k degrees, apothem isd / 2.
  bool in_cell(int site, Vec2 p) const {
    const Vec2 d = rotate(p - site_position(site), -rotation);
    const double apothem = isd / 2.0;
    for (int k = 0; k < 6; ++k) {
      const double a = deg_to_rad(60.0 * k);
      if (d.x * std::cos(a) + d.y * std::sin(a) > apothem + 1e-9) return false;
    }
    return true;
  }
};

// ---- Propagation ---------------------------------------------------------------

// 3D-UMa pathloss [dB]. Valid for 10 m <= d3D and 2D distance up to 5 km.
inline double pathloss_db(double distance_3d, bool los, const NetworkLayout& layout) {
  if (!(distance_3d >= 10.0)) throw Error("pathloss: distance below model validity (10 m)");
  const double dh = layout.bs_height - layout.ue_height;
  const double d3 = distance_3d;
  const double d2 = std::sqrt(std::max(d3 * d3 - dh * dh, 0.0));
  const double fc_ghz = layout.carrier_hz / 1e9;
  const double h_bs = layout.bs_height;
  const double h_ut = layout.ue_height;
  const double d_bp = 4.0 * (h_bs - 1.0) * (h_ut - 1.0) * layout.carrier_hz / kSpeedOfLight;
  double pl_los;
  if (d2 <= d_bp) {
    pl_los = 22.0 * std::log10(d3) + 28.0 + 20.0 * std::log10(fc_ghz);
  } else {
    pl_los = 40.0 * std::log10(d3) + 28.0 + 20.0 * std::log10(fc_ghz) - 9.0 * std::log10(d_bp * d_bp + dh * dh);
  }
  if (los) return pl_los;
  constexpr double W = 20.0;  // street width
  constexpr double h = 20.0;  // building height
  const double pl_nlos = 161.04 - 7.1 * std::log10(W) + 7.5 * std::log10(h) -
                         (24.37 - 3.7 * std::pow(h / h_bs, 2)) * std::log10(h_bs) +
                         (43.42 - 3.1 * std::log10(h_bs)) * (std::log10(d3) - 3.0) + 20.0 * std::log10(fc_ghz) -
                         (3.2 * std::pow(std::log10(17.625), 2) - 4.97) - 0.6 * (h_ut - 1.5);
  return std::max(pl_los, pl_nlos);
}

inline double los_probability(double distance_2d) {
  const double d = std::max(distance_2d, 1e-9);
  return std::min(18.0 / d, 1.0) * (1.0 - std::exp(-d / 63.0)) + std::exp(-d / 63.0);
}

struct ChannelModel {
  double k_factor_los_db = 9.0;
  int clusters = 10;
  double azimuth_spread = deg_to_rad(30.0);
  double elevation_spread = deg_to_rad(8.0);
  double shadowing_los_db = 4.0;
  double shadowing_nlos_db = 6.0;
  int rx_branches = 2;  // UE receive antennas, combined by MRC
  bool element_pattern = true;
  bool los_only = false;  // deterministic single LOS ray, no shadowing (symmetry checks)
};

// Geometry of a link seen from one sector's antenna frame.
struct LinkGeometry {
  double distance_2d;
  double distance_3d;
  double azimuth;  // relative to the sector boresight
  double zenith;   // from the vertical, > pi/2 looking down
};

inline LinkGeometry link_geometry(const NetworkLayout& layout, int sector, Vec2 ue) {
  const int site = sector / layout.sectors_per_site;
  const Vec2 d = ue - layout.site_image(site, ue);
  const double dh = layout.bs_height - layout.ue_height;
  LinkGeometry g;
  g.distance_2d = d.norm();
  g.distance_3d = std::hypot(g.distance_2d, dh);
  const double bearing = g.distance_2d < 1e-9 ? layout.sector_boresight(sector % layout.sectors_per_site)
                                              : std::atan2(d.y, d.x);
  g.azimuth = wrap_angle(bearing - layout.sector_boresight(sector % layout.sectors_per_site));
  g.zenith = kPi / 2.0 + std::atan2(dh, g.distance_2d);
  return g;
}

// Per (user, site) propagation state: shared by the three co-located sectors.
struct SiteLink {
  bool los = false;
  double shadowing_db = 0.0;
  double pathloss_db = 0.0;
  std::vector<double> cluster_bearing;  // global azimuth of each scatter cluster
  std::vector<double> cluster_zenith;
  std::vector<CVec> cluster_gain;       // [rx branch][cluster]
  std::vector<double> los_phase;        // [rx branch]
};

struct User {
  int id = 0;
  Vec2 position;
  int serving_sector = 0;
  std::vector<SiteLink> sites;  // one per site
  std::uint64_t small_scale_seed = 0;
  bool los() const { return sites.empty() ? false : sites[0].los; }
};

struct UserDrop {
  std::vector<User> users;
};

inline SiteLink draw_large_scale(Rng& rng, const NetworkLayout& layout, const ChannelModel& model, int site, Vec2 ue) {
  SiteLink s;
  const Vec2 d = ue - layout.site_image(site, ue);
  const double d2 = d.norm();
  const double d3 = std::hypot(d2, layout.bs_height - layout.ue_height);
  if (model.los_only) {
    s.los = true;
    s.shadowing_db = 0.0;
  } else {
    s.los = uniform01(rng) < los_probability(d2);
    std::normal_distribution<double> sh(0.0, s.los ? model.shadowing_los_db : model.shadowing_nlos_db);
    s.shadowing_db = sh(rng);
  }
  s.pathloss_db = pathloss_db(std::max(d3, 10.0), s.los, layout);
  return s;
}

inline void draw_small_scale(Rng& rng, const NetworkLayout& layout, const ChannelModel& model, SiteLink& s, int site,
                             Vec2 ue) {
  const Vec2 d = ue - layout.site_image(site, ue);
  const double bearing = std::atan2(d.y, d.x);
  const double zenith = kPi / 2.0 + std::atan2(layout.bs_height - layout.ue_height, d.norm());
  const auto C = static_cast<std::size_t>(model.los_only ? 0 : model.clusters);
  const auto B = static_cast<std::size_t>(std::max(1, model.rx_branches));
  std::normal_distribution<double> az(0.0, model.azimuth_spread);
  std::normal_distribution<double> el(0.0, model.elevation_spread);
  s.cluster_bearing.resize(C);
  s.cluster_zenith.resize(C);
  for (std::size_t c = 0; c < C; ++c) {
    s.cluster_bearing[c] = bearing + az(rng);
    s.cluster_zenith[c] = std::clamp(zenith + el(rng), 0.0, kPi);
  }
  s.los_phase.resize(B);
  s.cluster_gain.assign(B, CVec(C));
  for (std::size_t b = 0; b < B; ++b) {
    s.los_phase[b] = 2.0 * kPi * uniform01(rng);
    for (auto& g : s.cluster_gain[b]) g = complex_gaussian(rng, 1.0);
  }
}

// Mean received power from `sector` over its legacy sector antenna [W].
inline double legacy_rx_power(const NetworkLayout& layout, const User& u, int sector) {
  const int site = sector / layout.sectors_per_site;
  const auto g = link_geometry(layout, sector, u.position);
  const auto& s = u.sites[static_cast<std::size_t>(site)];
  return layout.tx_power_w() * db_to_lin(beam::sector_pattern_db(g.azimuth) - s.pathloss_db + s.shadowing_db);
}

inline int strongest_sector(const NetworkLayout& layout, const User& u) {
  int best = 0;
  double best_p = -1.0;
  for (int s = 0; s < layout.sector_count(); ++s) {
    const double p = legacy_rx_power(layout, u, s);
    if (p > best_p) {
      best_p = p;
      best = s;
    }
  }
  return best;
}

inline Vec2 uniform_in_layout(Rng& rng, const NetworkLayout& layout) {
  const int site = std::uniform_int_distribution<int>(0, layout.sites - 1)(rng);
  const double R = layout.isd / std::sqrt(3.0);
  for (;;) {
    const Vec2 local{(2.0 * uniform01(rng) - 1.0) * R, (2.0 * uniform01(rng) - 1.0) * R};
    const Vec2 p = layout.site_position(site) + rotate(local, layout.rotation);
    if (!layout.in_cell(site, p)) continue;
    if ((p - layout.site_position(site)).norm() < layout.min_distance) continue;
    return p;
  }
}

inline User make_user(int id, Vec2 p, const NetworkLayout& layout, const ChannelModel& model, std::uint64_t seed,
                      std::uint64_t draw_index) {
  User u;
  u.id = id;
  u.position = p;
  auto rng = make_rng(seed, {0x4c53u, draw_index});
  for (int s = 0; s < layout.sites; ++s) u.sites.push_back(draw_large_scale(rng, layout, model, s, p));
  u.serving_sector = strongest_sector(layout, u);
  u.small_scale_seed = derive_seed(seed, {0x5353u, draw_index});
  auto ss = Rng(u.small_scale_seed);
  for (int s = 0; s < layout.sites; ++s) draw_small_scale(ss, layout, model, u.sites[static_cast<std::size_t>(s)], s, p);
  return u;
}

// n users uniformly over the layout (minimum distance to the cell site
// enforced), each attached to its strongest sector. Deterministic under seed.
inline UserDrop drop_users(int n, const NetworkLayout& layout, std::uint64_t seed, const ChannelModel& model = {}) {
  layout.validate();
  if (n < 1) throw Error("drop_users: need at least one user");
  UserDrop drop;
  auto rng = make_rng(seed, {0x44524f50u});
  for (int i = 0; i < n; ++i) {
    const Vec2 p = uniform_in_layout(rng, layout);
    drop.users.push_back(make_user(i, p, layout, model, seed, static_cast<std::uint64_t>(i)));
  }
  return drop;
}

// Keeps dropping until `n` users are served by `sector`. Ids are 0..n-1 in
// acceptance order.
inline UserDrop drop_sector_users(int n, const NetworkLayout& layout, std::uint64_t seed, int sector = 0,
                                  const ChannelModel& model = {}) {
  layout.validate();
  if (n < 1) throw Error("drop_sector_users: need at least one user");
  UserDrop drop;
  auto rng = make_rng(seed, {0x44524f50u});
  for (std::uint64_t draw = 0; static_cast<int>(drop.users.size()) < n; ++draw) {
    const Vec2 p = uniform_in_layout(rng, layout);
    auto u = make_user(static_cast<int>(drop.users.size()), p, layout, model, seed, draw);
    if (u.serving_sector == sector) drop.users.push_back(std::move(u));
    if (draw > static_cast<std::uint64_t>(n) * 10000u) throw Error("drop_sector_users: sector never wins attachment");
  }
  return drop;
}

inline double k_factor(const SiteLink& s, const ChannelModel& model) {
  if (model.los_only) return std::numeric_limits<double>::infinity();
  return s.los ? db_to_lin(model.k_factor_los_db) : 0.0;
}

// 64-element channel row vector from `sector` to one UE receive branch:
// sqrt(gain) (sqrt(K/(K+1)) a_LOS + sqrt(1/(K+1)) sum_c g_c a_c / sqrt(C)),
// with the element pattern applied per ray.
inline CVec channel_vector(const User& u, int sector, const NetworkLayout& layout, const beam::UraConfig& ura,
                           const ChannelModel& model, int branch = 0) {
  const int site = sector / layout.sectors_per_site;
  const auto& s = u.sites[static_cast<std::size_t>(site)];
  const auto geo = link_geometry(layout, sector, u.position);
  const double boresight = layout.sector_boresight(sector % layout.sectors_per_site);
  const double large_scale = db_to_lin(-s.pathloss_db + s.shadowing_db);

  const auto br = static_cast<std::size_t>(branch);
  if (br >= s.los_phase.size()) throw Error("channel_vector: receive branch out of range");
  const double k_lin = k_factor(s, model);
  const double los_amp = std::isinf(k_lin) ? 1.0 : std::sqrt(k_lin / (k_lin + 1.0));
  const double nlos_amp = std::isinf(k_lin) ? 0.0 : std::sqrt(1.0 / (k_lin + 1.0));

  const auto element_amp = [&](double az, double zen) {
    return model.element_pattern ? std::sqrt(db_to_lin(beam::element_pattern_db(az, zen))) : 1.0;
  };

  CVec h(static_cast<std::size_t>(ura.total_elements()), cplx{0.0, 0.0});
  const auto add_ray = [&](double az, double zen, cplx coeff) {
    const auto a = beam::steering_vector(ura, az, zen);
    const cplx c = coeff * element_amp(az, zen);
    for (std::size_t i = 0; i < h.size(); ++i) h[i] += c * a[i];
  };
  if (los_amp > 0) add_ray(geo.azimuth, geo.zenith, std::polar(los_amp, s.los_phase[br]));
  const auto C = s.cluster_bearing.size();
  if (nlos_amp > 0 && C > 0) {
    const double per = nlos_amp / std::sqrt(static_cast<double>(C));
    for (std::size_t c = 0; c < C; ++c)
      add_ray(wrap_angle(s.cluster_bearing[c] - boresight), s.cluster_zenith[c], per * s.cluster_gain[br][c]);
  }
  const double amp = std::sqrt(large_scale);
  for (auto& z : h) z *= amp;
  return h;
}

// Received power at the user from every non-serving sector transmitting all
// beams at full load (weights already carry power / P each) [W].
inline double wraparound_interference(const User& u, const NetworkLayout& layout, const beam::UraConfig& ura,
                                      const beam::BeamSet& beams, const ChannelModel& model, int branch = 0) {
  double total = 0.0;
  for (int s = 0; s < layout.sector_count(); ++s) {
    if (s == u.serving_sector) continue;
    const auto h = channel_vector(u, s, layout, ura, model, branch);
    for (const auto& b : beams.beams) total += std::norm(beam::project(h, b.weights));
  }
  return total;
}

// Single-antenna legacy SINR: mean received powers over the sector pattern,
// small-scale fading per receive branch, branches combined by MRC.
inline double legacy_sinr(const User& u, const NetworkLayout& layout, const ChannelModel& model) {
  const auto& s = u.sites[static_cast<std::size_t>(u.serving_sector / layout.sectors_per_site)];
  double interference = 0.0;
  for (int sec = 0; sec < layout.sector_count(); ++sec)
    if (sec != u.serving_sector) interference += legacy_rx_power(layout, u, sec);
  const double mean_signal = legacy_rx_power(layout, u, u.serving_sector);
  auto rng = make_rng(u.small_scale_seed, {0x4c454741u});
  const double k_lin = k_factor(s, model);
  double branch_gain = 0.0;
  for (int r = 0; r < std::max(1, model.rx_branches); ++r) {
    const cplx scatter = complex_gaussian(rng, 1.0);
    const cplx los = std::polar(1.0, 2.0 * kPi * uniform01(rng));
    const cplx c = std::isinf(k_lin) ? los : std::sqrt(k_lin / (k_lin + 1.0)) * los + std::sqrt(1.0 / (k_lin + 1.0)) * scatter;
    branch_gain += std::norm(c);
  }
  return mean_signal * branch_gain / (interference + layout.noise_power_w());
}

struct SinrReport {
  int user_id = 0;
  int best_beam = 0;       // 0-based
  int best_pair = 0;       // pair (best_pair, best_pair + 1), 0-based
  double sinr_one_beam_db = 0.0;
  double sinr_two_beam_db = 0.0;
  double sinr_all_beams_db = 0.0;
  double legacy_sinr_db = 0.0;
  std::vector<double> one_beam_db;  // per beam j
  std::vector<double> two_beam_db;  // per adjacent pair j
};

struct BranchSinr {
  std::vector<double> one_beam;  // linear, per beam
  std::vector<double> two_beam;  // linear, per adjacent pair
  double all_beams = 0.0;
};

// The three SINR families for one receive branch, linear.
inline BranchSinr branch_sinr(std::span<const cplx> h, const beam::BeamSet& beams, double i_wrap, double noise_var) {
  const std::size_t P = beams.size();
  if (P == 0) throw Error("compute_sinr_report: empty beam set");
  std::vector<cplx> proj(P);
  cplx total{0.0, 0.0};
  for (std::size_t k = 0; k < P; ++k) {
    proj[k] = beam::project(h, beams[k].weights);
    total += proj[k];
  }
  BranchSinr b;
  for (std::size_t j = 0; j < P; ++j)
    b.one_beam.push_back(std::norm(proj[j]) / (i_wrap + 2.0 * std::norm(total - proj[j]) + noise_var));
  for (std::size_t j = 0; j + 1 < P; ++j) {
    const cplx pair = proj[j] + proj[j + 1];
    b.two_beam.push_back(std::norm(pair) / (i_wrap + 2.0 * std::norm(total - pair) + noise_var));
  }
  b.all_beams = std::norm(total) / (i_wrap + noise_var);
  return b;
}

inline double to_db_or_floor(double x) { return x > 0 ? lin_to_db(x) : -std::numeric_limits<double>::infinity(); }

// Best beam / best adjacent pair selection over per-branch SINRs summed by MRC.
inline SinrReport combine_branches(int user_id, std::span<const BranchSinr> branches, double legacy_sinr_lin) {
  if (branches.empty()) throw Error("compute_sinr_report: no receive branches");
  const std::size_t P = branches[0].one_beam.size();
  std::vector<double> one(P, 0.0), two(P > 0 ? P - 1 : 0, 0.0);
  double all = 0.0;
  for (const auto& b : branches) {
    for (std::size_t j = 0; j < P; ++j) one[j] += b.one_beam[j];
    for (std::size_t j = 0; j < two.size(); ++j) two[j] += b.two_beam[j];
    all += b.all_beams;
  }
  SinrReport r;
  r.user_id = user_id;
  r.legacy_sinr_db = to_db_or_floor(legacy_sinr_lin);
  r.best_beam = static_cast<int>(std::max_element(one.begin(), one.end()) - one.begin());
  r.sinr_one_beam_db = to_db_or_floor(one[static_cast<std::size_t>(r.best_beam)]);
  if (two.empty()) {
    r.best_pair = 0;
    r.sinr_two_beam_db = r.sinr_one_beam_db;
  } else {
    r.best_pair = static_cast<int>(std::max_element(two.begin(), two.end()) - two.begin());
    r.sinr_two_beam_db = to_db_or_floor(two[static_cast<std::size_t>(r.best_pair)]);
  }
  r.sinr_all_beams_db = to_db_or_floor(all);
  for (double x : one) r.one_beam_db.push_back(to_db_or_floor(x));
  for (double x : two) r.two_beam_db.push_back(to_db_or_floor(x));
  return r;
}

// One-beam, two-beam and all-beam SINRs for a single receive branch h, each
// with the doubled coherent leak of the remaining beams in the denominator.
inline SinrReport compute_sinr_report(int user_id, std::span<const cplx> h, const beam::BeamSet& beams,
                                      double i_wrap, double noise_var, double legacy_sinr_lin = 0.0) {
  const BranchSinr b = branch_sinr(h, beams, i_wrap, noise_var);
  return combine_branches(user_id, std::span<const BranchSinr>(&b, 1), legacy_sinr_lin);
}

// Full report for a dropped user: serving channel and wrap-around
// interference per receive branch, MRC across branches.
inline SinrReport user_sinr_report(const User& u, const NetworkLayout& layout, const beam::UraConfig& ura,
                                   const beam::BeamSet& beams, const ChannelModel& model) {
  std::vector<BranchSinr> branches;
  const double noise = layout.noise_power_w();
  for (int r = 0; r < std::max(1, model.rx_branches); ++r) {
    const auto h = channel_vector(u, u.serving_sector, layout, ura, model, r);
    const double i_wrap = wraparound_interference(u, layout, ura, beams, model, r);
    branches.push_back(branch_sinr(h, beams, i_wrap, noise));
  }
  return combine_branches(u.id, branches, legacy_sinr(u, layout, model));
}

}  // namespace bfpdcch::deploy
