#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "bfpdcch/sim_runner.hpp"

namespace fs = std::filesystem;
using namespace bfpdcch;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string profile = "paper";
  unsigned threads = 1;
};

sim::CampaignConfig base_config(const Globals& g) {
  auto c = sim::resolve_profile(g.profile);
  c.threads = g.threads;
  return c;
}

void write_file(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out || !(out << content) || !out.flush()) throw Error("cannot write " + tmp);
  }
  fs::rename(tmp, path);
}

int cmd_bler(const Globals& g, int trials) {
  auto c = base_config(g);
  if (g.seed) c.bler.seed = *g.seed;
  if (trials > 0) c.bler.trials = trials;
  const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
  const auto curves = link::simulate_bler(sim::link_config(c));
  const auto table = abstraction::build_threshold_table(curves, c.bler.target, "bler_" + sim::bler_key(c));
  std::ostringstream csv;
  sim::write_bler_csv(csv, curves);
  write_file(dir / "bler_curves.csv", csv.str());
  write_file(dir / "al_thresholds.json", sim::threshold_json(table).dump(2) + "\n");
  // Refresh the campaign cache for the same settings.
  write_file(dir / ("bler_" + sim::bler_key(c) + ".csv"), csv.str());
  for (auto al : kAllAls) {
    const auto it = table.thresholds_db.find(al);
    if (it == table.thresholds_db.end()) std::printf("AL%d  unreachable on grid\n", cces(al));
    else std::printf("AL%d  %.3f dB\n", cces(al), it->second);
  }
  return table.complete() ? 0 : 2;
}

int cmd_beams(const Globals& g, const std::string& set, double theta_deg, int samples) {
  const auto c = base_config(g);
  const auto dirs = sim::named_beam_directions(c, set);
  const auto beams = beam::make_beam_set(c.antenna, dirs);
  std::vector<double> grid;
  for (int i = 0; i < samples; ++i) grid.push_back(-kPi / 2 + kPi * i / (samples - 1));
  const auto pattern = beam::radiation_pattern(c.antenna, beams, grid, deg_to_rad(theta_deg));
  std::ostringstream csv;
  sim::write_pattern_csv(csv, pattern);
  const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
  write_file(dir / ("beam_pattern_" + set + ".csv"), csv.str());
  for (std::size_t b = 0; b < beams.size(); ++b) {
    std::vector<double> gains;
    for (std::size_t i = 0; i < grid.size(); ++i) gains.push_back(pattern[b * grid.size() + i].gain_db);
    std::printf("beam %zu  az %.2f deg  el %.2f deg  peak side lobe %.2f dB\n", b + 1,
                rad_to_deg(dirs[b].azimuth), rad_to_deg(dirs[b].elevation), beam::peak_side_lobe_db(gains));
  }
  return 0;
}

int cmd_validate_abstraction(const Globals& g, int symbols) {
  link::AbstractionConfig a;
  if (g.seed) a.seed = *g.seed;
  if (symbols > 0) a.symbols = symbols;
  a.threads = g.threads;
  const auto study = link::estimation_vs_abstraction(a);
  std::ostringstream csv;
  sim::write_ber_csv(csv, study);
  const fs::path dir = g.out.empty() ? fs::path("out") : fs::path(g.out);
  write_file(dir / "ber_curves.csv", csv.str());
  int rc = 0;
  for (std::size_t i = 0; i < study.estimation.size(); ++i) {
    const auto e = link::crossing_db(study.estimation[i].points, 1e-2);
    const auto s = link::crossing_db(study.abstraction[i].points, 1e-2);
    if (e && s) {
      std::printf("alpha %.4f  estimation %.2f dB  abstraction %.2f dB  gap %.2f dB\n", study.estimation[i].alpha, *e,
                  *s, *e - *s);
    } else {
      std::printf("alpha %.4f  BER 1e-2 not reached on the grid\n", study.estimation[i].alpha);
      rc = 2;
    }
  }
  return rc;
}

int cmd_campaign(const Globals& g, const std::string& path) {
  sim::CampaignConfig c;
  if (fs::path(path).extension() == ".json") {
    c = sim::config_from_manifest(path);
    c.threads = g.threads;
  } else {
    c = sim::load_config(path, base_config(g));
  }
  if (g.seed) c.seed = g.seed;
  if (!g.out.empty()) c.output_dir = g.out;
  c.threads = g.threads;
  c.validate();

  const fs::path dir = c.output_dir;
  const auto bler = sim::bler_table(c, dir / "cache");
  std::fprintf(stderr, "BLER table %s (%s)\n", bler.cache_file.string().c_str(), bler.from_cache ? "cached" : "simulated");
  const auto bundle = sim::run_campaign(c, bler.table);
  sim::emit_metrics(c, bundle, dir);
  for (const auto& m : bundle.schemes)
    std::printf("%-9s %8.3f users/TTI\n", sched::to_string(m.scheme), m.avg_users_per_tti());
  return 0;
}

// Quick invariant checks on the library, one line each.
int cmd_selftest(const Globals& g) {
  int failures = 0;
  auto check = [&](const char* name, bool ok) {
    std::printf("%s %s\n", ok ? "PASS" : "FAIL", name);
    if (!ok) ++failures;
  };
  auto rng = make_rng(g.seed.value_or(1), {0x53454c46});

  {
    bool ok = true;
    for (int i = 0; i < 2000 && ok; ++i) {
      const auto y = static_cast<std::uint32_t>(rng() % control::kHashModulus);
      const int m = static_cast<int>(rng() % 8);
      const Al al = kAllAls[rng() % 4];
      const int n = cces(al) + static_cast<int>(rng() % 80);
      const auto idx = control::candidate_indices(y, m, al, n);
      const int L = cces(al);
      for (int k = 0; k < L; ++k) ok = ok && idx[static_cast<std::size_t>(k)] == L * static_cast<int>((y + m) % (n / L)) + k;
    }
    check("search space candidates follow the hashing formula", ok);
  }
  {
    const auto ura = beam::UraConfig::at_carrier(2.4e9);
    bool ok = true;
    for (double az : {-0.7, 0.0, 0.4})
      for (double el : {1.2, kPi / 2, 2.0}) {
        const auto ph = beam::phase_excitations(ura, {az, el});
        ok = ok && std::abs(std::abs(beam::array_factor(ura, ph, az, el)) - 32.0) < 1e-9;
      }
    check("array factor peaks at M*N in the steering direction", ok);
  }
  {
    bool ok = true;
    for (int i = 0; i < 200 && ok; ++i) {
      link::Bits payload(link::kPayloadBits);
      for (auto& b : payload) b = static_cast<std::uint8_t>(rng() & 1u);
      const Al al = kAllAls[static_cast<std::size_t>(i % 4)];
      const auto tx = link::qpsk_modulate(link::rate_match(link::tbcc_encode(link::crc_attach(payload)), al));
      const auto dec = link::viterbi_decode(link::rate_dematch(link::qpsk_soft_demod(tx, 1.0)));
      ok = link::crc_check(dec) && std::equal(payload.begin(), payload.end(), dec.begin());
    }
    check("noise-free DCI chain round trip", ok);
  }
  {
    link::LinkChainConfig l;
    l.trials = 128;
    l.sinr_grid_db = {-2.0, 2.0};
    l.seed = g.seed.value_or(1);
    l.threads = 1;
    const auto a = link::simulate_bler(l);
    l.threads = 4;
    const auto b = link::simulate_bler(l);
    bool ok = true;
    for (std::size_t i = 0; i < a.size(); ++i)
      for (std::size_t p = 0; p < a[i].points.size(); ++p) ok = ok && a[i].points[p].errors == b[i].points[p].errors;
    check("BLER simulation independent of worker count", ok);
  }
  {
    bool ok = true;
    for (int inst = 0; inst < 200 && ok; ++inst) {
      std::vector<sched::UserSchedState> users;
      const int n = 2 + static_cast<int>(rng() % 10);
      for (int u = 0; u < n; ++u) {
        sched::UserSchedState s;
        s.user_id = static_cast<int>(rng() % 500);
        s.al_legacy = kAllAls[rng() % 4];
        users.push_back(s);
      }
      const int tti = static_cast<int>(rng() % 10);
      control::CceGrid a(42, 1), b(42, 1);
      const std::vector<Al> css{Al::L8, Al::L4};
      const auto l = sched::schedule_legacy(users, a, tti, css);
      const auto o = sched::schedule_optimal(users, b, tti, css);
      ok = o.users_scheduled >= l.users_scheduled;
    }
    check("optimal never schedules fewer users than first-fit", ok);
  }
  {
    const std::vector<double> y{3.0, 1.0, 2.0, 0.5, 0.7, 0.1};
    const auto f = abstraction::isotonic_non_increasing(y);
    check("isotonic fit is non-increasing", std::is_sorted(f.rbegin(), f.rend()));
  }
  return failures ? 1 : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Beamformed PDCCH capacity simulator"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--seed", g.seed, "master seed (overrides the config)");
  app.add_option("--out", g.out, "output directory");
  app.add_option("--profile", g.profile, "base profile: paper or a profile file");
  app.add_option("--threads", g.threads, "worker threads (results do not depend on it)")->check(CLI::PositiveNumber);
  app.set_version_flag("--version", sim::kVersion);

  int bler_trials = 0;
  auto* bler = app.add_subcommand("bler", "simulate BLER curves per AL and derive the SINR thresholds");
  bler->add_option("--trials", bler_trials, "trials per SINR point");

  std::string beam_set = "six";
  double theta_deg = 90.0;
  int samples = 721;
  auto* beams = app.add_subcommand("beams", "dump azimuth radiation patterns");
  beams->add_option("--set", beam_set, "beam set")->check(CLI::IsMember({"paper", "six"}));
  beams->add_option("--theta-deg", theta_deg, "elevation of the azimuth cut");
  beams->add_option("--samples", samples, "azimuth samples over [-90, 90] deg")->check(CLI::Range(3, 100000));

  int symbols = 0;
  auto* validate = app.add_subcommand("validate-abstraction", "explicit estimation vs SINR abstraction BER");
  validate->add_option("--symbols", symbols, "QPSK symbols per SNR point");

  std::string config_path;
  auto* campaign = app.add_subcommand("campaign", "run the system-level campaign");
  campaign->add_option("config", config_path, "INI config or manifest.json")->required();

  auto* selftest = app.add_subcommand("selftest", "run the invariant suite");

  for (auto* s : {bler, beams, validate, campaign, selftest}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return e.get_exit_code() == 0 ? 1 : e.get_exit_code();
  }

  try {
    if (*bler) return cmd_bler(g, bler_trials);
    if (*beams) return cmd_beams(g, beam_set, theta_deg, samples);
    if (*validate) return cmd_validate_abstraction(g, symbols);
    if (*campaign) return cmd_campaign(g, config_path);
    if (*selftest) return cmd_selftest(g);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
