// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
#include <cstdio>
#include <functional>
#include <set>

#include "CLI11.hpp"
#include "bfpdcch/sim_runner.hpp"

using namespace bfpdcch;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string f2(double v, int d = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", d, v);
  return buf;
}

double mean(const std::vector<double>& v) {
  double s = 0;
  for (double x : v) s += x;
  return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double fraction_above(const std::vector<double>& v, double t) {
  return v.empty() ? 0.0 : static_cast<double>(std::count_if(v.begin(), v.end(), [&](double x) { return x > t; })) /
                               static_cast<double>(v.size());
}

int exhaustive_max(const std::vector<sched::UserSchedState>& us, int tti, int n_cce) {
  std::vector<std::vector<control::CceBlock>> cands;
  for (const auto& u : us) cands.push_back(control::enumerate_candidates(control::uss_params(u.user_id, tti), *u.al_legacy, n_cce));
  std::vector<char> occ(static_cast<std::size_t>(n_cce), 0);
  int best = 0;
  std::function<void(std::size_t, int)> rec = [&](std::size_t i, int n) {
    if (i == us.size()) {
      best = std::max(best, n);
      return;
    }
    rec(i + 1, n);
    for (const auto& b : cands[i]) {
      bool ok = true;
      for (int c = b.start; c < b.start + b.length; ++c) ok = ok && !occ[static_cast<std::size_t>(c)];
      if (!ok) continue;
      for (int c = b.start; c < b.start + b.length; ++c) occ[static_cast<std::size_t>(c)] = 1;
      rec(i + 1, n + 1);
      for (int c = b.start; c < b.start + b.length; ++c) occ[static_cast<std::size_t>(c)] = 0;
    }
  };
  rec(0, 0);
  return best;
}

std::map<std::string, std::string> render(const sim::CampaignConfig& c, const sim::MetricsBundle& b) {
  std::map<std::string, std::string> m;
  for (auto& f : sim::render_metrics(c, b)) m[f.name] = f.content;
  return m;
}

void check_campaign(const sim::CampaignConfig& c, const sim::MetricsBundle& b) {
  using sched::Scheme;
  const double legacy = b.scheme(Scheme::kLegacy).avg_users_per_tti();
  const double optimal = b.scheme(Scheme::kOptimal).avg_users_per_tti();
  const double epdcch = b.scheme(Scheme::kEpdcch).avg_users_per_tti();
  const double bf = b.scheme(Scheme::kBfPdcch).avg_users_per_tti();
  report(legacy < optimal && optimal < epdcch && epdcch < bf, "scheme ordering",
         "legacy " + f2(legacy) + " < optimal " + f2(optimal) + " < epdcch " + f2(epdcch) + " < bf_pdcch " + f2(bf) +
             " users/TTI over " + std::to_string(c.n_drops) + " drops x " + std::to_string(c.n_tti) + " TTIs");

  const double ratio = bf / legacy;
  report(ratio >= 1.8 && ratio <= 3.0, "capacity gain ratio", "bf_pdcch/legacy " + f2(ratio) + " in [1.8, 3.0]");

  const double one = fraction_above(b.sinr[1], 0.0);
  const double two = fraction_above(b.sinr[2], 0.0);
  const double m_all = mean(b.sinr[3]), m_leg = mean(b.sinr[0]);
  report(one >= 0.20 && two >= 0.60 && m_all >= m_leg, "SINR population",
         "one-beam > 0 dB " + f2(100 * one, 1) + "% (>= 20), two-beam > 0 dB " + f2(100 * two, 1) +
             "% (>= 60), mean all-beam " + f2(m_all, 2) + " dB >= mean legacy " + f2(m_leg, 2) + " dB");

  const auto hl = b.scheme(Scheme::kLegacy).al_fractions();
  const auto he = b.scheme(Scheme::kEpdcch).al_fractions();
  const auto hb = b.scheme(Scheme::kBfPdcch).al_fractions();
  report(hl[0] > he[0] && he[0] > hb[0] && hb[3] > hl[3], "AL allocation shift",
         "AL1 legacy " + f2(hl[0]) + " > epdcch " + f2(he[0]) + " > bf_pdcch " + f2(hb[0]) + "; AL8 bf_pdcch " +
             f2(hb[3]) + " > legacy " + f2(hl[3]));
}

void check_beams(const sim::CampaignConfig& c) {
  const auto dirs = sim::named_beam_directions(c, "six");
  const auto beams = beam::make_beam_set(c.antenna, dirs);
  std::vector<double> grid;
  for (int i = 0; i <= 1440; ++i) grid.push_back(-kPi / 2 + kPi * i / 1440.0);
  const auto pat = beam::radiation_pattern(c.antenna, beams, grid, kPi / 2);
  double worst = -300;
  for (std::size_t b = 0; b < beams.size(); ++b) {
    std::vector<double> g;
    for (std::size_t i = 0; i < grid.size(); ++i) g.push_back(pat[b * grid.size() + i].gain_db);
    worst = std::max(worst, beam::peak_side_lobe_db(g));
  }
  const double mn = c.antenna.elements_vertical * c.antenna.elements_horizontal;
  double err = 0;
  auto all = dirs;
  for (const auto& d : c.beam_directions()) all.push_back(d);
  for (const auto& d : all) {
    const auto ph = beam::phase_excitations(c.antenna, d);
    err = std::max(err, std::abs(std::abs(beam::array_factor(c.antenna, ph, d.azimuth, d.elevation)) - mn));
  }
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1e", err);
  report(worst <= -10.0 && err <= 1e-9, "beam patterns",
         "six-beam worst side lobe " + f2(worst, 2) + " dB (<= -10), max ||AF| - M*N| " + buf + " (<= 1e-9)");
}

void check_abstraction() {
  link::AbstractionConfig cfg;
  const auto study = link::estimation_vs_abstraction(cfg);
  bool ok = true;
  std::string detail;
  for (std::size_t a = 0; a < study.estimation.size(); ++a) {
    const auto e = link::crossing_db(study.estimation[a].points, 1e-2);
    const auto s = link::crossing_db(study.abstraction[a].points, 1e-2);
    const double gap = e && s ? std::abs(*e - *s) : 1e9;
    ok = ok && gap <= 0.5;
    detail += "alpha " + f2(study.estimation[a].alpha) + " gap " + f2(gap, 2) + " dB; ";
  }
  // Zero leak: every point agrees within a 4-sigma two-sample binomial bound.
  int outside = 0;
  const auto& e0 = study.estimation[0].points;
  const auto& s0 = study.abstraction[0].points;
  for (std::size_t p = 0; p < e0.size(); ++p) {
    const double pm = 0.5 * (e0[p].ber + s0[p].ber);
    const double se = std::sqrt(pm * (1 - pm) * (1.0 / e0[p].bits + 1.0 / s0[p].bits));
    if (std::abs(e0[p].ber - s0[p].ber) > 4 * se + 1e-6) ++outside;
  }
  report(ok && outside == 0, "abstraction validity",
         detail + "gaps <= 0.5 dB; alpha 0 points outside 4 sigma: " + std::to_string(outside));
}

void check_bler(const sim::BlerTable& t) {
  const auto& th = t.table;
  bool ok = th.complete() && th.strictly_decreasing();
  std::string detail;
  for (auto al : kAllAls) {
    if (!th.thresholds_db.count(al)) continue;
    detail += "AL" + std::to_string(cces(al)) + " " + f2(th.threshold(al), 2) + " dB, ";
  }
  double min_step = 1e9;
  if (th.complete())
    for (std::size_t i = 0; i + 1 < 4; ++i) min_step = std::min(min_step, th.threshold(kAllAls[i]) - th.threshold(kAllAls[i + 1]));
  ok = ok && min_step >= 2.0;

  auto rng = make_rng(1000, {});
  int exact = 0;
  for (int i = 0; i < 1000; ++i) {
    link::Bits payload(link::kPayloadBits);
    for (auto& b : payload) b = static_cast<std::uint8_t>(rng() & 1u);
    const Al al = kAllAls[static_cast<std::size_t>(i % 4)];
    const auto tx = link::qpsk_modulate(link::rate_match(link::tbcc_encode(link::crc_attach(payload)), al));
    const auto dec = link::viterbi_decode(link::rate_dematch(link::qpsk_soft_demod(tx, 1.0)));
    if (link::crc_check(dec) && std::equal(payload.begin(), payload.end(), dec.begin())) ++exact;
  }
  report(ok && exact == 1000, "BLER table",
         detail + "min step per doubling " + f2(min_step, 2) + " dB (>= 2); zero-noise round trips " +
             std::to_string(exact) + "/1000");
}

void check_candidates() {
  auto rng = make_rng(1001, {});
  int mismatches = 0;
  for (int i = 0; i < 10000; ++i) {
    const auto y = static_cast<std::uint32_t>(rng() % control::kHashModulus);
    const int m = static_cast<int>(rng() % 16);
    const Al al = kAllAls[rng() % 4];
    const int L = cces(al);
    const int n = L + static_cast<int>(rng() % 200);
    const auto got = control::candidate_indices(y, m, al, n);
    std::vector<int> want;
    const long long slot = (static_cast<long long>(y) + m) % (n / L);
    for (int k = 0; k < L; ++k) want.push_back(static_cast<int>(L * slot + k));
    if (got != want) ++mismatches;
  }
  int css_outside = 0, css_placed = 0;
  for (int trial = 0; trial < 2000; ++trial) {
    control::CceGrid g(16 + static_cast<int>(rng() % 70), 1 + static_cast<int>(rng() % 8));
    for (int k = 0; k < 6; ++k) {
      const Al al = rng() % 2 ? Al::L4 : Al::L8;
      const control::DciRequest req{-1 - k, control::kDciPayloadBits, al, control::SearchSpace::kCss, g.all_rows()};
      if (auto p = control::place_dci(g, req, control::css_params())) {
        ++css_placed;
        if (p->start_cce + p->length > control::kCssSize) ++css_outside;
      }
    }
  }
  report(mismatches == 0 && css_outside == 0 && css_placed > 0, "search space oracle",
         std::to_string(mismatches) + " mismatches on 10000 tuples; CSS placements outside 16 CCEs " +
             std::to_string(css_outside) + "/" + std::to_string(css_placed));
}

void check_optimal() {
  auto rng = make_rng(1002, {});
  int instances = 0, mismatch = 0, worse = 0;
  for (int n_cce = 1; n_cce <= 16; ++n_cce)
    for (int n = 0; n <= 6; ++n)
      for (int rep = 0; rep < 60; ++rep) {
        std::vector<sched::UserSchedState> us;
        std::set<int> ids;
        while (static_cast<int>(us.size()) < n) {
          sched::UserSchedState u;
          u.user_id = static_cast<int>(rng() % 65000);
          if (!ids.insert(u.user_id).second) continue;
          u.al_legacy = kAllAls[rng() % 4];
          us.push_back(u);
        }
        const int tti = static_cast<int>(rng() % 10);
        control::CceGrid a(n_cce, 1), b(n_cce, 1);
        const auto l = sched::schedule_legacy(us, a, tti, {});
        const auto o = sched::schedule_optimal(us, b, tti, {});
        ++instances;
        if (o.users_scheduled != exhaustive_max(us, tti, n_cce)) ++mismatch;
        if (o.users_scheduled < l.users_scheduled) ++worse;
      }
  report(mismatch == 0 && worse == 0, "optimal scheduler oracle",
         std::to_string(instances) + " instances (<= 6 users, <= 16 CCEs): " + std::to_string(mismatch) +
             " mismatches vs exhaustive, " + std::to_string(worse) + " below first-fit");
}

void check_determinism(sim::CampaignConfig c, const abstraction::AlThresholdTable& table,
                       const std::map<std::string, std::string>& reference) {
  c.threads = 4;
  const auto again = render(c, sim::run_campaign(c, table));
  std::size_t differing = 0;
  for (const auto& [name, body] : reference)
    if (!again.count(name) || again.at(name) != body) ++differing;
  report(differing == 0 && again.size() == reference.size(), "determinism",
         "rerun with 4 workers: " + std::to_string(differing) + " of " + std::to_string(reference.size()) +
             " output files differ");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance checks"};
  std::string cache = "bler_cache";
  app.add_option("--cache", cache, "directory for the cached BLER curves");
  CLI11_PARSE(app, argc, argv);

  try {
    auto c = sim::paper_profile();
    c.seed = 7;
    c.validate();
    const auto bler = sim::bler_table(c, cache);
    const auto bundle = sim::run_campaign(c, bler.table);
    const auto reference = render(c, bundle);
    check_campaign(c, bundle);
    check_beams(c);
    check_abstraction();
    check_bler(bler);
    check_candidates();
    check_optimal();
    check_determinism(c, bler.table, reference);
  } catch (const std::exception& e) {
    std::printf("FAIL acceptance aborted: %s\n", e.what());
    return 2;
  }
  std::printf("%d failing criteria\n", failures);
  return failures ? 1 : 0;
}
