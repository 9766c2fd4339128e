#pragma once

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "bfpdcch/beam_engine.hpp"
#include "bfpdcch/common.hpp"
#include "bfpdcch/control_channel.hpp"
#include "bfpdcch/deployment_channel.hpp"
#include "bfpdcch/link_abstraction.hpp"
#include "bfpdcch/link_chain.hpp"
#include "bfpdcch/parallel.hpp"
#include "bfpdcch/random.hpp"
#include "bfpdcch/schedulers.hpp"
#include "json.hpp"

namespace bfpdcch::sim {

inline constexpr const char* kVersion = "1.0.0";
inline constexpr int kManifestFormat = 1;

namespace fs = std::filesystem;
using sched::Scheme;

// ---- Small text helpers --------------------------------------------------------

inline std::string fmt_double(double v, int precision = 17) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", precision, v);
  return buf;
}

inline std::string fmt_fixed(double v, int decimals = 6) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  std::string s = buf;
  if (s == "-0.000000") s = "0.000000";
  return s;
}

inline std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  const auto e = s.find_last_not_of(" \t\r\n");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

inline std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

inline std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) throw Error("sha256 failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned i = 0; i < len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 15]);
  }
  return out;
}

// ---- Configuration -------------------------------------------------------------

struct BlerSettings {
  int trials = 2000;
  int max_errors = 200;
  double sinr_min_db = -8.0;
  double sinr_max_db = 12.0;
  double sinr_step_db = 0.5;
  double target = 0.01;
  std::uint64_t seed = 1;
  std::string cache_dir;  // empty: the campaign output directory
};

struct CampaignConfig {
  std::string profile = "paper";
  deploy::NetworkLayout layout;
  deploy::ChannelModel channel;
  beam::UraConfig antenna = beam::UraConfig::at_carrier(2.4e9);
  std::vector<double> beam_azimuths_deg{-33.75, -11.25, 11.25, 33.75};
  std::vector<double> beam_elevations_deg{101.25, 123.75};
  int users_per_sector = 500;
  int n_drops = 10;
  int n_tti = 1000;
  std::optional<std::uint64_t> seed;
  std::vector<Scheme> schemes{sched::kAllSchemes.begin(), sched::kAllSchemes.end()};
  int cfi = 3;
  double dl_fraction = 0.5;
  double bandwidth_mhz = 20.0;
  sched::SchedulerConfig scheduler;
  BlerSettings bler;
  std::string output_dir = "out";
  bool placement_log = false;
  unsigned threads = 1;  // never changes results

  std::vector<beam::SteeringDirection> beam_directions() const {
    std::vector<double> az, el;
    for (double a : beam_azimuths_deg) az.push_back(deg_to_rad(a));
    for (double e : beam_elevations_deg) el.push_back(deg_to_rad(e));
    return beam::direction_grid(az, el);
  }

  // Scheduler settings with the CCE count and beam count filled in.
  sched::SchedulerConfig effective_scheduler() const {
    auto s = scheduler;
    s.n_cce = control::cce_capacity(bandwidth_mhz, cfi, dl_fraction);
    s.beams = static_cast<int>(beam_azimuths_deg.size() * beam_elevations_deg.size());
    return s;
  }

  void validate() const {
    if (!seed) throw Error("config: seed is mandatory");
    if (profile != "paper" && !fs::is_regular_file(profile)) throw Error("config: unknown profile '" + profile + "'");
    if (users_per_sector < 1) throw Error("config: users_per_sector must be >= 1");
    if (n_drops < 0) throw Error("config: drops must be >= 0");
    if (n_tti < 1) throw Error("config: ttis must be >= 1");
    if (schemes.empty()) throw Error("config: no schemes selected");
    if (beam_azimuths_deg.empty() || beam_elevations_deg.empty()) throw Error("config: empty beam grid");
    if (channel.clusters < 0 || channel.rx_branches < 1) throw Error("config: invalid channel model");
    if (bler.trials < 1 || !(bler.sinr_step_db > 0) || bler.sinr_max_db < bler.sinr_min_db)
      throw Error("config: invalid BLER grid");
    if (!(bler.target > 0) || bler.target >= 1) throw Error("config: BLER target must lie in (0, 1)");
    layout.validate();
    antenna.validate();
    effective_scheduler().validate();
    if (effective_scheduler().n_cce < control::kCssSize) throw Error("config: fewer CCEs than the common region");
  }
};

// Built-in profile: the system-level parameter set of the evaluation.
inline CampaignConfig paper_profile() {
  CampaignConfig c;
  c.profile = "paper";
  c.antenna = beam::UraConfig::at_carrier(c.layout.carrier_hz, 4, 8, 2);
  c.antenna.z_form = beam::UraConfig::ZForm::kConventional;
  return c;
}

inline CampaignConfig load_config(const fs::path& path, CampaignConfig base = paper_profile());

// A profile is either the built-in name "paper" or a profile file.
inline CampaignConfig resolve_profile(const std::string& name) {
  if (name == "paper") return paper_profile();
  if (fs::is_regular_file(name)) {
    auto base = paper_profile();
    base.profile = name;
    auto c = load_config(name, base);
    c.profile = name;
    return c;
  }
  throw Error("config: unknown profile '" + name + "'");
}

namespace detail {

using boost::property_tree::ptree;

inline const std::map<std::string, std::set<std::string>>& known_keys() {
  static const std::map<std::string, std::set<std::string>> keys{
      {"campaign", {"profile", "seed", "users_per_sector", "drops", "ttis", "schemes", "output", "placement_log"}},
      {"layout",
       {"isd", "bs_height", "ue_height", "carrier_ghz", "tx_power_dbm", "bandwidth_mhz", "noise_figure_db",
        "min_distance", "wrap_around"}},
      {"antenna", {"rows", "columns", "polarizations", "z_form", "azimuths_deg", "elevations_deg"}},
      {"channel",
       {"k_factor_los_db", "clusters", "azimuth_spread_deg", "elevation_spread_deg", "shadowing_los_db",
        "shadowing_nlos_db", "rx_branches", "element_pattern"}},
      {"control",
       {"cfi", "dl_fraction", "css_load", "epdcch_prbs", "ecces_per_prb", "epdcch_layers", "exact_user_limit"}},
      {"bler", {"trials", "max_errors", "sinr_min_db", "sinr_max_db", "sinr_step_db", "target", "seed", "cache"}},
  };
  return keys;
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  std::istringstream is(text);
  T v{};
  is >> v;
  if (!is || !(is >> std::ws).eof()) throw Error("config: bad value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes") return true;
  if (text == "false" || text == "0" || text == "no") return false;
  throw Error("config: bad boolean for " + key + ": '" + text + "'");
}

inline std::vector<double> parse_doubles(const std::string& key, const std::string& text) {
  std::vector<double> out;
  for (const auto& item : split_list(text)) out.push_back(parse_value<double>(key, item));
  if (out.empty()) throw Error("config: empty list for " + key);
  return out;
}

inline std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i]);
  return s;
}

}  // namespace detail

inline void apply_setting(CampaignConfig& c, const std::string& section, const std::string& key,
                          const std::string& raw) {
  using namespace detail;
  const auto& known = known_keys();
  const auto sec = known.find(section);
  if (sec == known.end()) throw Error("config: unknown section [" + section + "]");
  if (!sec->second.count(key)) throw Error("config: unknown key " + section + "." + key);
  const std::string v = trim(raw);
  const std::string name = section + "." + key;
  auto d = [&] { return parse_value<double>(name, v); };
  auto i = [&] { return parse_value<int>(name, v); };
  if (section == "campaign") {
    if (key == "profile") c.profile = v;
    else if (key == "seed") c.seed = parse_value<std::uint64_t>(name, v);
    else if (key == "users_per_sector") c.users_per_sector = i();
    else if (key == "drops") c.n_drops = i();
    else if (key == "ttis") c.n_tti = i();
    else if (key == "output") c.output_dir = v;
    else if (key == "placement_log") c.placement_log = parse_bool(name, v);
    else if (key == "schemes") {
      c.schemes.clear();
      for (const auto& s : split_list(v)) c.schemes.push_back(sched::scheme_from_string(s));
    }
  } else if (section == "layout") {
    auto& l = c.layout;
    if (key == "isd") l.isd = d();
    else if (key == "bs_height") l.bs_height = d();
    else if (key == "ue_height") l.ue_height = d();
    else if (key == "carrier_ghz") {
      l.carrier_hz = d() * 1e9;
      const auto zf = c.antenna.z_form;
      c.antenna = beam::UraConfig::at_carrier(l.carrier_hz, c.antenna.elements_vertical,
                                              c.antenna.elements_horizontal, c.antenna.polarizations);
      c.antenna.z_form = zf;
    } else if (key == "tx_power_dbm") l.tx_power_dbm = d();
    else if (key == "bandwidth_mhz") {
      l.bandwidth_hz = d() * 1e6;
      c.bandwidth_mhz = d();
    } else if (key == "noise_figure_db") l.noise_figure_db = d();
    else if (key == "min_distance") l.min_distance = d();
    else if (key == "wrap_around") l.wrap_around = parse_bool(name, v);
  } else if (section == "antenna") {
    auto& a = c.antenna;
    if (key == "rows") a.elements_vertical = i();
    else if (key == "columns") a.elements_horizontal = i();
    else if (key == "polarizations") a.polarizations = i();
    else if (key == "z_form") {
      if (v == "printed") a.z_form = beam::UraConfig::ZForm::kPrinted;
      else if (v == "conventional") a.z_form = beam::UraConfig::ZForm::kConventional;
      else throw Error("config: antenna.z_form must be printed or conventional");
    } else if (key == "azimuths_deg") c.beam_azimuths_deg = parse_doubles(name, v);
    else if (key == "elevations_deg") c.beam_elevations_deg = parse_doubles(name, v);
  } else if (section == "channel") {
    auto& m = c.channel;
    if (key == "k_factor_los_db") m.k_factor_los_db = d();
    else if (key == "clusters") m.clusters = i();
    else if (key == "azimuth_spread_deg") m.azimuth_spread = deg_to_rad(d());
    else if (key == "elevation_spread_deg") m.elevation_spread = deg_to_rad(d());
    else if (key == "shadowing_los_db") m.shadowing_los_db = d();
    else if (key == "shadowing_nlos_db") m.shadowing_nlos_db = d();
    else if (key == "rx_branches") m.rx_branches = i();
    else if (key == "element_pattern") m.element_pattern = parse_bool(name, v);
  } else if (section == "control") {
    auto& s = c.scheduler;
    if (key == "cfi") c.cfi = i();
    else if (key == "dl_fraction") c.dl_fraction = d();
    else if (key == "epdcch_prbs") s.epdcch_prbs = i();
    else if (key == "ecces_per_prb") s.ecces_per_prb = i();
    else if (key == "epdcch_layers") s.epdcch_layers = i();
    else if (key == "exact_user_limit") s.exact_user_limit = i();
    else if (key == "css_load") {
      s.css_load.clear();
      for (const auto& item : split_list(v)) s.css_load.push_back(al_from_int(parse_value<int>(name, item)));
    }
  } else if (section == "bler") {
    auto& b = c.bler;
    if (key == "trials") b.trials = i();
    else if (key == "max_errors") b.max_errors = i();
    else if (key == "sinr_min_db") b.sinr_min_db = d();
    else if (key == "sinr_max_db") b.sinr_max_db = d();
    else if (key == "sinr_step_db") b.sinr_step_db = d();
    else if (key == "target") b.target = d();
    else if (key == "seed") b.seed = parse_value<std::uint64_t>(name, v);
    else if (key == "cache") b.cache_dir = v;
  }
}

// Overlays an INI document on `base`. Sections map onto the known keys;
// anything unknown is rejected.
inline CampaignConfig parse_config(std::istream& in, CampaignConfig base = paper_profile()) {
  detail::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw Error(std::string("config: ") + e.what());
  }
  // A profile named in the document replaces the base before anything else applies.
  if (auto named = tree.get_optional<std::string>("campaign.profile")) {
    const auto name = trim(*named);
    if (name != base.profile) base = resolve_profile(name);
  }
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw Error("config: key '" + section + "' outside a section");
    for (const auto& [key, value] : body) apply_setting(base, section, key, value.get_value<std::string>());
  }
  return base;
}

inline CampaignConfig load_config(const fs::path& path, CampaignConfig base) {
  std::ifstream in(path);
  if (!in) throw Error("config: cannot open " + path.string());
  return parse_config(in, std::move(base));
}

// Every setting that can influence results, as sorted section.key=value lines.
inline std::map<std::string, std::string> settings(const CampaignConfig& c) {
  using detail::join;
  std::map<std::string, std::string> m;
  auto put = [&](const std::string& k, const std::string& v) { m[k] = v; };
  put("campaign.profile", c.profile);
  put("campaign.seed", c.seed ? std::to_string(*c.seed) : "");
  put("campaign.users_per_sector", std::to_string(c.users_per_sector));
  put("campaign.drops", std::to_string(c.n_drops));
  put("campaign.ttis", std::to_string(c.n_tti));
  std::string schemes;
  for (std::size_t i = 0; i < c.schemes.size(); ++i) schemes += (i ? "," : "") + std::string(to_string(c.schemes[i]));
  put("campaign.schemes", schemes);
  put("campaign.placement_log", c.placement_log ? "true" : "false");
  put("layout.isd", fmt_double(c.layout.isd));
  put("layout.bs_height", fmt_double(c.layout.bs_height));
  put("layout.ue_height", fmt_double(c.layout.ue_height));
  put("layout.carrier_ghz", fmt_double(c.layout.carrier_hz / 1e9));
  put("layout.tx_power_dbm", fmt_double(c.layout.tx_power_dbm));
  put("layout.bandwidth_mhz", fmt_double(c.bandwidth_mhz));
  put("layout.noise_figure_db", fmt_double(c.layout.noise_figure_db));
  put("layout.min_distance", fmt_double(c.layout.min_distance));
  put("layout.wrap_around", c.layout.wrap_around ? "true" : "false");
  put("antenna.rows", std::to_string(c.antenna.elements_vertical));
  put("antenna.columns", std::to_string(c.antenna.elements_horizontal));
  put("antenna.polarizations", std::to_string(c.antenna.polarizations));
  put("antenna.z_form", c.antenna.z_form == beam::UraConfig::ZForm::kPrinted ? "printed" : "conventional");
  put("antenna.azimuths_deg", join(c.beam_azimuths_deg));
  put("antenna.elevations_deg", join(c.beam_elevations_deg));
  put("channel.k_factor_los_db", fmt_double(c.channel.k_factor_los_db));
  put("channel.clusters", std::to_string(c.channel.clusters));
  put("channel.azimuth_spread_deg", fmt_double(rad_to_deg(c.channel.azimuth_spread)));
  put("channel.elevation_spread_deg", fmt_double(rad_to_deg(c.channel.elevation_spread)));
  put("channel.shadowing_los_db", fmt_double(c.channel.shadowing_los_db));
  put("channel.shadowing_nlos_db", fmt_double(c.channel.shadowing_nlos_db));
  put("channel.rx_branches", std::to_string(c.channel.rx_branches));
  put("channel.element_pattern", c.channel.element_pattern ? "true" : "false");
  put("control.cfi", std::to_string(c.cfi));
  put("control.dl_fraction", fmt_double(c.dl_fraction));
  std::string css;
  for (std::size_t i = 0; i < c.scheduler.css_load.size(); ++i)
    css += (i ? "," : "") + std::to_string(cces(c.scheduler.css_load[i]));
  put("control.css_load", css);
  put("control.epdcch_prbs", std::to_string(c.scheduler.epdcch_prbs));
  put("control.ecces_per_prb", std::to_string(c.scheduler.ecces_per_prb));
  put("control.epdcch_layers", std::to_string(c.scheduler.epdcch_layers));
  put("control.exact_user_limit", std::to_string(c.scheduler.exact_user_limit));
  put("bler.trials", std::to_string(c.bler.trials));
  put("bler.max_errors", std::to_string(c.bler.max_errors));
  put("bler.sinr_min_db", fmt_double(c.bler.sinr_min_db));
  put("bler.sinr_max_db", fmt_double(c.bler.sinr_max_db));
  put("bler.sinr_step_db", fmt_double(c.bler.sinr_step_db));
  put("bler.target", fmt_double(c.bler.target));
  put("bler.seed", std::to_string(c.bler.seed));
  return m;
}

inline std::string canonical_text(const std::map<std::string, std::string>& kv, const std::string& prefix = {}) {
  std::string s;
  for (const auto& [k, v] : kv)
    if (prefix.empty() || k.rfind(prefix, 0) == 0) s += k + "=" + v + "\n";
  return s;
}

inline std::string config_hash(const CampaignConfig& c) { return sha256_hex(canonical_text(settings(c))); }

// Rebuilds a config from manifest settings (section.key -> value).
inline CampaignConfig config_from_settings(const std::map<std::string, std::string>& kv) {
  CampaignConfig c = paper_profile();
  // Carrier first: it resets the antenna geometry.
  if (auto it = kv.find("layout.carrier_ghz"); it != kv.end()) apply_setting(c, "layout", "carrier_ghz", it->second);
  for (const auto& [k, v] : kv) {
    if (k == "layout.carrier_ghz" || v.empty()) continue;
    const auto dot = k.find('.');
    if (dot == std::string::npos) throw Error("manifest: malformed setting '" + k + "'");
    apply_setting(c, k.substr(0, dot), k.substr(dot + 1), v);
  }
  return c;
}

// ---- BLER table ----------------------------------------------------------------

inline link::LinkChainConfig link_config(const CampaignConfig& c) {
  link::LinkChainConfig l;
  l.trials = c.bler.trials;
  l.max_errors = c.bler.max_errors;
  l.sinr_grid_db = link::LinkChainConfig::grid(c.bler.sinr_min_db, c.bler.sinr_max_db, c.bler.sinr_step_db);
  l.seed = c.bler.seed;
  l.threads = c.threads;
  return l;
}

// Column headers of every CSV the tools write.
namespace schema {
inline constexpr const char* kBeamPattern = "beam_id,azimuth_rad,gain_db";
inline constexpr const char* kBler = "al,sinr_db,bler,trials,errors";
inline constexpr const char* kBer = "method,alpha,snr_db,ber";
inline constexpr const char* kSinrCdf = "series,sinr_db,cdf";
inline constexpr const char* kAlHist = "scheme,al,fraction";
inline constexpr const char* kUsersPerCce = "scheme,value,cdf";
inline constexpr const char* kSummary = "scheme,avg_users_per_tti";
inline constexpr const char* kPlacements = "drop,scheme,tti,user_id,ss_class,al,start_cce,beams";
}  // namespace schema

inline void write_bler_csv(std::ostream& os, const std::vector<link::BlerCurve>& curves) {
  os << schema::kBler << '\n';
  for (const auto& c : curves)
    for (const auto& p : c.points)
      os << cces(c.al) << ',' << fmt_fixed(p.sinr_db, 3) << ',' << fmt_double(p.bler, 10) << ',' << p.trials << ','
         << p.errors << '\n';
}

inline std::vector<link::BlerCurve> read_bler_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || trim(line) != schema::kBler) throw Error("bler cache: bad header");
  std::map<int, link::BlerCurve> by_al;
  while (std::getline(is, line)) {
    if (trim(line).empty()) continue;
    const auto f = split_list(line);
    if (f.size() != 5) throw Error("bler cache: malformed row '" + line + "'");
    const Al al = al_from_int(std::stoi(f[0]));
    auto& c = by_al[cces(al)];
    c.al = al;
    c.points.push_back({std::stod(f[1]), std::stod(f[2]), std::stoi(f[3]), std::stoi(f[4])});
  }
  std::vector<link::BlerCurve> out;
  for (auto& [k, c] : by_al) out.push_back(std::move(c));
  return out;
}

inline std::string bler_key(const CampaignConfig& c) {
  return sha256_hex(canonical_text(settings(c), "bler.")).substr(0, 16);
}

inline void write_pattern_csv(std::ostream& os, std::span<const beam::PatternSample> samples) {
  os << schema::kBeamPattern << '\n';
  for (const auto& p : samples) os << p.beam_id << ',' << fmt_fixed(p.azimuth, 8) << ',' << fmt_fixed(p.gain_db) << '\n';
}

inline void write_ber_csv(std::ostream& os, const link::AbstractionStudy& study) {
  os << schema::kBer << '\n';
  auto rows = [&](const char* method, const std::vector<link::BerCurve>& curves) {
    for (const auto& c : curves)
      for (const auto& p : c.points)
        os << method << ',' << fmt_double(c.alpha, 10) << ',' << fmt_fixed(p.snr_db, 3) << ',' << fmt_double(p.ber, 10)
           << '\n';
  };
  rows("estimation", study.estimation);
  rows("abstraction", study.abstraction);
}

struct BlerTable {
  std::vector<link::BlerCurve> curves;
  abstraction::AlThresholdTable table;
  fs::path cache_file;
  bool from_cache = false;
};

// Loads the curves from the cache when present, otherwise simulates and
// stores them.
inline BlerTable bler_table(const CampaignConfig& c, const fs::path& default_dir) {
  BlerTable t;
  const fs::path dir = c.bler.cache_dir.empty() ? default_dir : fs::path(c.bler.cache_dir);
  t.cache_file = dir / ("bler_" + bler_key(c) + ".csv");
  if (std::ifstream in(t.cache_file); in) {
    t.curves = read_bler_csv(in);
    t.from_cache = true;
  } else {
    t.curves = link::simulate_bler(link_config(c));
    fs::create_directories(dir);
    const auto tmp = t.cache_file.string() + ".tmp";
    {
      std::ofstream out(tmp);
      if (!out) throw Error("cannot write " + tmp);
      write_bler_csv(out, t.curves);
    }
    fs::rename(tmp, t.cache_file);
  }
  t.table = abstraction::build_threshold_table(t.curves, c.bler.target, "bler_" + bler_key(c));
  if (!t.table.complete()) throw Error("BLER grid does not reach the target for every AL; widen bler.sinr_max_db");
  return t;
}

// ---- Campaign -----------------------------------------------------------------

inline constexpr std::array<const char*, 4> kSinrSeries{"legacy", "one_beam", "two_beam", "all_beams"};

struct SchemeMetrics {
  Scheme scheme = Scheme::kLegacy;
  long long ttis = 0;
  long long scheduled = 0;
  std::array<long long, 4> al_counts{};
  std::vector<double> users_per_cce;  // one sample per TTI
  long long outage_users = 0;
  long long eligible_users = 0;

  double avg_users_per_tti() const { return ttis ? static_cast<double>(scheduled) / static_cast<double>(ttis) : 0.0; }
  double avg_users_per_cce() const {
    if (users_per_cce.empty()) return 0.0;
    double s = 0.0;
    for (double v : users_per_cce) s += v;
    return s / static_cast<double>(users_per_cce.size());
  }
  std::array<double, 4> al_fractions() const {
    std::array<double, 4> f{};
    long long total = 0;
    for (auto n : al_counts) total += n;
    if (total == 0) return f;
    for (std::size_t i = 0; i < 4; ++i) f[i] = static_cast<double>(al_counts[i]) / static_cast<double>(total);
    return f;
  }
};

struct PlacementRow {
  int drop;
  Scheme scheme;
  int tti;
  control::DciPlacement placement;
};

struct MetricsBundle {
  std::array<std::vector<double>, 4> sinr;  // indexed like kSinrSeries
  std::vector<SchemeMetrics> schemes;
  std::array<long long, 3> classification{};  // one-beam, two-beam, all-beam
  int drops = 0;
  abstraction::AlThresholdTable table;
  std::vector<PlacementRow> placements;

  const SchemeMetrics& scheme(Scheme s) const {
    for (const auto& m : schemes)
      if (m.scheme == s) return m;
    throw Error(std::string("metrics: scheme not simulated: ") + to_string(s));
  }
};

struct DropResult {
  std::array<std::vector<double>, 4> sinr;
  std::vector<SchemeMetrics> schemes;
  std::array<long long, 3> classification{};
  std::vector<PlacementRow> placements;
};

// Named beam grids for pattern dumps: "paper" is the campaign grid, "six"
// spreads six beams over the 120 degree sector in the horizontal plane.
inline std::vector<beam::SteeringDirection> named_beam_directions(const CampaignConfig& c, const std::string& name) {
  if (name == "paper") return c.beam_directions();
  if (name == "six") {
    std::vector<beam::SteeringDirection> d;
    for (int k : {-5, -3, -1, 1, 3, 5}) d.push_back({k * kPi / 20.0, kPi / 2.0});
    return d;
  }
  throw Error("unknown beam set '" + name + "' (expected paper or six)");
}

inline beam::BeamSet campaign_beams(const CampaignConfig& c) {
  const auto dirs = c.beam_directions();
  return beam::make_beam_set(c.antenna, dirs, c.layout.tx_power_w());
}

// SINR reports of one drop's users in the observed sector.
inline std::vector<deploy::SinrReport> drop_reports(const CampaignConfig& c, int drop, const beam::BeamSet& beams) {
  const auto users =
      deploy::drop_sector_users(c.users_per_sector, c.layout, derive_seed(*c.seed, {0x44524f50u, static_cast<std::uint64_t>(drop)}),
                                0, c.channel);
  std::vector<deploy::SinrReport> out;
  out.reserve(users.users.size());
  for (const auto& u : users.users) out.push_back(deploy::user_sinr_report(u, c.layout, c.antenna, beams, c.channel));
  return out;
}

inline DropResult run_drop(const CampaignConfig& c, int drop, const beam::BeamSet& beams,
                           const abstraction::AlThresholdTable& table) {
  DropResult r;
  const auto reports = drop_reports(c, drop, beams);
  std::vector<sched::UserSchedState> states;
  for (const auto& rep : reports) {
    r.sinr[0].push_back(rep.legacy_sinr_db);
    r.sinr[1].push_back(rep.sinr_one_beam_db);
    r.sinr[2].push_back(rep.sinr_two_beam_db);
    r.sinr[3].push_back(rep.sinr_all_beams_db);
    states.push_back(sched::classify_user(rep, table));
    ++r.classification[static_cast<std::size_t>(states.back().classification)];
  }
  const auto scfg = c.effective_scheduler();
  for (auto scheme : c.schemes) {
    SchemeMetrics m;
    m.scheme = scheme;
    for (const auto& s : states) {
      if (sched::eligible(s, scheme)) ++m.eligible_users;
      else ++m.outage_users;
    }
    const double denom = sched::available_cces(scheme, scfg);
    for (auto& t : sched::run_multi_tti(states, scheme, c.n_tti, scfg)) {
      ++m.ttis;
      m.scheduled += t.users_scheduled;
      m.users_per_cce.push_back(t.users_scheduled / denom);
      for (const auto& p : t.placements) ++m.al_counts[al_index(p.request.al)];
      if (c.placement_log)
        for (auto& p : t.placements) r.placements.push_back({drop, scheme, t.tti, std::move(p)});
    }
    r.schemes.push_back(std::move(m));
  }
  return r;
}

// Drops run in parallel and merge in drop order, so the bundle does not
// depend on the worker count.
inline MetricsBundle run_campaign(const CampaignConfig& c, const abstraction::AlThresholdTable& table) {
  c.validate();
  MetricsBundle b;
  b.table = table;
  b.drops = c.n_drops;
  for (auto s : c.schemes) {
    SchemeMetrics m;
    m.scheme = s;
    b.schemes.push_back(std::move(m));
  }
  if (c.n_drops == 0) return b;
  const auto beams = campaign_beams(c);
  std::vector<DropResult> drops(static_cast<std::size_t>(c.n_drops));
  parallel_for(drops.size(), c.threads, [&](std::size_t d) { drops[d] = run_drop(c, static_cast<int>(d), beams, table); });
  for (auto& d : drops) {
    for (std::size_t i = 0; i < 4; ++i) b.sinr[i].insert(b.sinr[i].end(), d.sinr[i].begin(), d.sinr[i].end());
    for (std::size_t i = 0; i < 3; ++i) b.classification[i] += d.classification[i];
    for (std::size_t k = 0; k < d.schemes.size(); ++k) {
      auto& dst = b.schemes[k];
      const auto& src = d.schemes[k];
      dst.ttis += src.ttis;
      dst.scheduled += src.scheduled;
      for (std::size_t i = 0; i < 4; ++i) dst.al_counts[i] += src.al_counts[i];
      dst.users_per_cce.insert(dst.users_per_cce.end(), src.users_per_cce.begin(), src.users_per_cce.end());
      dst.outage_users += src.outage_users;
      dst.eligible_users += src.eligible_users;
    }
    b.placements.insert(b.placements.end(), std::make_move_iterator(d.placements.begin()),
                        std::make_move_iterator(d.placements.end()));
  }
  return b;
}

// ---- Output ---------------------------------------------------------------------

struct CdfPoint {
  double value;
  double cdf;
};

// Empirical CDF at each distinct sample value.
inline std::vector<CdfPoint> empirical_cdf(std::vector<double> samples) {
  std::sort(samples.begin(), samples.end());
  std::vector<CdfPoint> out;
  const double n = static_cast<double>(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (i + 1 < samples.size() && samples[i + 1] == samples[i]) continue;
    out.push_back({samples[i], static_cast<double>(i + 1) / n});
  }
  return out;
}

inline nlohmann::json threshold_json(const abstraction::AlThresholdTable& t) {
  nlohmann::json th = nlohmann::json::object();
  for (const auto& [al, db] : t.thresholds_db) th[std::to_string(cces(al))] = db;
  return {{"target_bler", t.target}, {"source", t.source}, {"thresholds_db", th}};
}

inline nlohmann::json manifest_json(const CampaignConfig& c, const MetricsBundle& b) {
  nlohmann::json settings_json = nlohmann::json::object();
  for (const auto& [k, v] : settings(c)) settings_json[k] = v;
  return {{"profile", {{"name", c.profile}, {"settings", settings_json}}},
          {"seed", c.seed.value_or(0)},
          {"threshold_table", threshold_json(b.table)},
          {"config_hash", config_hash(c)},
          {"versions", {{"bfpdcch", kVersion}, {"manifest_format", kManifestFormat}}}};
}

inline CampaignConfig config_from_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("manifest: cannot open " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw Error(std::string("manifest: ") + e.what());
  }
  std::map<std::string, std::string> kv;
  for (const auto& [k, v] : j.at("profile").at("settings").items()) kv[k] = v.get<std::string>();
  auto c = config_from_settings(kv);
  if (config_hash(c) != j.at("config_hash").get<std::string>()) throw Error("manifest: config hash mismatch");
  return c;
}

struct OutputFile {
  std::string name;
  std::string content;
};

inline std::vector<OutputFile> render_metrics(const CampaignConfig& c, const MetricsBundle& b) {
  std::vector<OutputFile> files;
  {
    std::ostringstream os;
    os << schema::kSinrCdf << '\n';
    for (std::size_t i = 0; i < 4; ++i)
      for (const auto& p : empirical_cdf(b.sinr[i]))
        os << kSinrSeries[i] << ',' << fmt_fixed(p.value) << ',' << fmt_fixed(p.cdf, 8) << '\n';
    files.push_back({"sinr_cdf.csv", os.str()});
  }
  {
    std::ostringstream os;
    os << schema::kAlHist << '\n';
    for (const auto& m : b.schemes) {
      const auto f = m.al_fractions();
      for (std::size_t i = 0; i < 4; ++i) os << to_string(m.scheme) << ',' << cces(kAllAls[i]) << ',' << fmt_fixed(f[i], 8) << '\n';
    }
    files.push_back({"al_hist.csv", os.str()});
  }
  {
    std::ostringstream os;
    os << schema::kUsersPerCce << '\n';
    for (const auto& m : b.schemes)
      for (const auto& p : empirical_cdf(m.users_per_cce))
        os << to_string(m.scheme) << ',' << fmt_fixed(p.value, 8) << ',' << fmt_fixed(p.cdf, 8) << '\n';
    files.push_back({"users_per_cce.csv", os.str()});
  }
  {
    std::ostringstream os;
    os << schema::kSummary << '\n';
    for (const auto& m : b.schemes) os << to_string(m.scheme) << ',' << fmt_fixed(m.avg_users_per_tti()) << '\n';
    files.push_back({"summary.csv", os.str()});
  }
  {
    std::ostringstream os;
    for (const auto& m : b.schemes) {
      nlohmann::json hist = nlohmann::json::object();
      const auto f = m.al_fractions();
      for (std::size_t i = 0; i < 4; ++i) hist[std::to_string(cces(kAllAls[i]))] = f[i];
      nlohmann::json line{{"scheme", to_string(m.scheme)},
                          {"avg_users_per_tti", m.avg_users_per_tti()},
                          {"avg_users_per_cce", m.avg_users_per_cce()},
                          {"al_histogram", hist},
                          {"outage_users", m.outage_users}};
      os << line.dump() << '\n';
    }
    files.push_back({"summary.jsonl", os.str()});
  }
  if (c.placement_log) {
    std::ostringstream os;
    os << schema::kPlacements << '\n';
    for (const auto& r : b.placements) {
      const auto& p = r.placement;
      std::string beams;
      for (std::size_t i = 0; i < p.request.beams.size(); ++i) beams += (i ? ";" : "") + std::to_string(p.request.beams[i]);
      os << r.drop << ',' << to_string(r.scheme) << ',' << r.tti << ',' << p.request.user_id << ','
         << control::to_string(p.request.ss) << ',' << cces(p.request.al) << ',' << p.start_cce << ',' << beams << '\n';
    }
    files.push_back({"placements.csv", os.str()});
  }
  files.push_back({"manifest.json", manifest_json(c, b).dump(2) + "\n"});
  return files;
}

// Writes every file to a temporary name first, then renames, so a failure
// leaves no partial outputs behind.
inline void emit_metrics(const CampaignConfig& c, const MetricsBundle& b, const fs::path& dir) {
  const auto files = render_metrics(c, b);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  std::vector<fs::path> temps;
  for (const auto& f : files) {
    const auto tmp = dir / (f.name + ".tmp");
    std::ofstream out(tmp, std::ios::binary);
    if (!out || !(out << f.content) || !out.flush()) {
      for (const auto& t : temps) fs::remove(t, ec);
      fs::remove(tmp, ec);
      throw Error("cannot write " + tmp.string());
    }
    temps.push_back(tmp);
  }
  for (std::size_t i = 0; i < files.size(); ++i) fs::rename(temps[i], dir / files[i].name);
}

}  // namespace bfpdcch::sim
