#include <gtest/gtest.h>

#include <cstdlib>

#include "bfpdcch/sim_runner.hpp"

using namespace bfpdcch;
using namespace bfpdcch::sim;

namespace {

const fs::path kSource{BFPDCCH_SOURCE_DIR};
const std::string kCli{BFPDCCH_CLI};

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("bfpdcch_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

CampaignConfig parse(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

CampaignConfig small_config() {
  auto c = parse(
      "[campaign]\nseed = 11\nusers_per_sector = 30\ndrops = 2\nttis = 15\nplacement_log = true\n"
      "[bler]\ntrials = 200\nmax_errors = 40\nsinr_step_db = 1\n");
  return c;
}

abstraction::AlThresholdTable synthetic_table() {
  abstraction::AlThresholdTable t;
  t.thresholds_db = {{Al::L1, 1.0}, {Al::L2, -2.0}, {Al::L4, -5.0}, {Al::L8, -8.0}};
  t.source = "synthetic";
  return t;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream is(s);
  for (std::string l; std::getline(is, l);) out.push_back(l);
  return out;
}

std::vector<std::string> cells(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream is(line);
  for (std::string c; std::getline(is, c, ',');) out.push_back(c);
  return out;
}

std::map<std::string, std::string> render(const CampaignConfig& c, const MetricsBundle& b) {
  std::map<std::string, std::string> m;
  for (auto& f : render_metrics(c, b)) m[f.name] = f.content;
  return m;
}

int run(const std::string& args) { return std::system((kCli + " " + args + " > /dev/null 2>&1").c_str()); }

}  // namespace

TEST(Config, RejectsUnknownKeysAndSections) {
  EXPECT_THROW(parse("[campaign]\nseed = 1\nbogus = 2\n"), Error);
  EXPECT_THROW(parse("[nowhere]\nseed = 1\n"), Error);
  EXPECT_THROW(parse("[campaign]\nttis = many\n"), Error);
  EXPECT_THROW(parse("[campaign]\nschemes = legacy, fancy\n"), Error);
  EXPECT_THROW(parse("seed = 1\n"), Error);
}

TEST(Config, SeedIsMandatory) {
  const auto c = parse("[campaign]\ndrops = 1\n");
  EXPECT_FALSE(c.seed);
  EXPECT_THROW(c.validate(), Error);
  EXPECT_NO_THROW(small_config().validate());
}

TEST(Config, ProfileResolution) {
  const auto file = (kSource / "profiles" / "paper.profile").string();
  const auto c = parse("[campaign]\nprofile = " + file + "\nttis = 5\n");
  EXPECT_EQ(c.profile, file);
  EXPECT_EQ(c.seed, 7u);
  EXPECT_EQ(c.n_tti, 5);
  EXPECT_EQ(c.antenna.z_form, beam::UraConfig::ZForm::kConventional);
  EXPECT_NO_THROW(c.validate());
  EXPECT_THROW(parse("[campaign]\nprofile = no/such/profile\n"), Error);
  EXPECT_THROW(resolve_profile("nothing"), Error);
  EXPECT_EQ(resolve_profile("paper").profile, "paper");
}

TEST(Config, ProfileFileMatchesBuiltIn) {
  auto file = load_config(kSource / "profiles" / "paper.profile");
  auto builtin = paper_profile();
  builtin.seed = 7;
  builtin.output_dir = file.output_dir;
  EXPECT_EQ(settings(file), settings(builtin));
}

TEST(Config, SettingsRoundTripAndHash) {
  const auto c = small_config();
  const auto back = config_from_settings(settings(c));
  EXPECT_EQ(settings(back), settings(c));
  EXPECT_EQ(config_hash(back), config_hash(c));
  EXPECT_EQ(config_hash(c), config_hash(small_config()));
  EXPECT_EQ(config_hash(c).size(), 64u);
  auto d = c;
  d.n_tti += 1;
  EXPECT_NE(config_hash(d), config_hash(c));
  auto t = c;
  t.threads = 8;
  EXPECT_EQ(config_hash(t), config_hash(c));
}

TEST(Schemas, WriterHeaders) {
  std::ostringstream bler, ber, pat;
  link::BlerCurve curve;
  curve.al = Al::L2;
  curve.points.push_back({-1.5, 0.125, 400, 50});
  write_bler_csv(bler, {curve});
  EXPECT_EQ(lines(bler.str()).at(0), schema::kBler);
  std::istringstream in(bler.str());
  const auto back = read_bler_csv(in);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].al, Al::L2);
  EXPECT_EQ(back[0].points.at(0).trials, 400);
  EXPECT_EQ(back[0].points.at(0).bler, 0.125);

  write_ber_csv(ber, link::AbstractionStudy{});
  EXPECT_EQ(lines(ber.str()).at(0), schema::kBer);

  const auto c = paper_profile();
  const auto beams = campaign_beams(c);
  const std::vector<double> az{-0.5, 0.0, 0.5};
  const auto samples = beam::radiation_pattern(c.antenna, beams, az, kPi / 2);
  write_pattern_csv(pat, samples);
  const auto pl = lines(pat.str());
  EXPECT_EQ(pl.at(0), schema::kBeamPattern);
  EXPECT_EQ(pl.size(), 1 + samples.size());
  EXPECT_EQ(cells(pl.at(1)).size(), 3u);
}

class CampaignFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    config_ = new CampaignConfig(small_config());
    bundle_ = new MetricsBundle(run_campaign(*config_, synthetic_table()));
  }
  static void TearDownTestSuite() {
    delete bundle_;
    delete config_;
  }
  static CampaignConfig* config_;
  static MetricsBundle* bundle_;
};
CampaignConfig* CampaignFixture::config_ = nullptr;
MetricsBundle* CampaignFixture::bundle_ = nullptr;

TEST_F(CampaignFixture, EveryFileCarriesItsSchema) {
  const auto files = render(*config_, *bundle_);
  const std::map<std::string, const char*> expected{{"sinr_cdf.csv", schema::kSinrCdf},
                                                    {"al_hist.csv", schema::kAlHist},
                                                    {"users_per_cce.csv", schema::kUsersPerCce},
                                                    {"summary.csv", schema::kSummary},
                                                    {"placements.csv", schema::kPlacements}};
  for (const auto& [name, header] : expected) {
    ASSERT_TRUE(files.count(name)) << name;
    const auto ls = lines(files.at(name));
    EXPECT_EQ(ls.at(0), header) << name;
    const auto width = cells(header).size();
    for (std::size_t i = 1; i < ls.size(); ++i) ASSERT_EQ(cells(ls[i]).size(), width) << name << ": " << ls[i];
  }
}

TEST_F(CampaignFixture, CdfsNonDecreasingToOne) {
  const auto files = render(*config_, *bundle_);
  for (const char* name : {"sinr_cdf.csv", "users_per_cce.csv"}) {
    std::map<std::string, std::pair<double, double>> last;  // series -> (value, cdf)
    const auto ls = lines(files.at(name));
    for (std::size_t i = 1; i < ls.size(); ++i) {
      const auto c = cells(ls[i]);
      const double v = std::stod(c[1]), p = std::stod(c[2]);
      if (last.count(c[0])) {
        EXPECT_GE(v, last[c[0]].first);
        EXPECT_GE(p, last[c[0]].second);
      }
      EXPECT_GT(p, 0.0);
      last[c[0]] = {v, p};
    }
    EXPECT_FALSE(last.empty());
    for (const auto& [series, vp] : last) EXPECT_NEAR(vp.second, 1.0, 1e-12) << name << " " << series;
  }
}

TEST_F(CampaignFixture, HistogramsSumToOneAndSummaryPerScheme) {
  for (const auto& m : bundle_->schemes) {
    const auto f = m.al_fractions();
    EXPECT_NEAR(f[0] + f[1] + f[2] + f[3], 1.0, 1e-9);
    EXPECT_EQ(m.ttis, config_->n_drops * config_->n_tti);
    EXPECT_EQ(m.users_per_cce.size(), static_cast<std::size_t>(m.ttis));
  }
  const auto files = render(*config_, *bundle_);
  std::map<std::string, double> sums;
  const auto hist = lines(files.at("al_hist.csv"));
  for (std::size_t i = 1; i < hist.size(); ++i) sums[cells(hist[i])[0]] += std::stod(cells(hist[i])[2]);
  EXPECT_EQ(sums.size(), config_->schemes.size());
  for (const auto& [s, v] : sums) EXPECT_NEAR(v, 1.0, 1e-6) << s;
  EXPECT_EQ(lines(files.at("summary.csv")).size(), 1 + config_->schemes.size());
  EXPECT_EQ(lines(files.at("summary.jsonl")).size(), config_->schemes.size());
}

TEST_F(CampaignFixture, SummaryMatchesPlacementLog) {
  const auto files = render(*config_, *bundle_);
  std::map<std::string, long long> placed;
  const auto ls = lines(files.at("placements.csv"));
  for (std::size_t i = 1; i < ls.size(); ++i) ++placed[cells(ls[i])[1]];
  for (const auto& m : bundle_->schemes) EXPECT_EQ(placed[to_string(m.scheme)], m.scheduled) << to_string(m.scheme);
}

TEST_F(CampaignFixture, ManifestKeySet) {
  const auto j = nlohmann::json::parse(render(*config_, *bundle_).at("manifest.json"));
  std::set<std::string> keys;
  for (const auto& [k, v] : j.items()) keys.insert(k);
  EXPECT_EQ(keys, (std::set<std::string>{"profile", "seed", "threshold_table", "config_hash", "versions"}));
  EXPECT_EQ(j.at("seed").get<std::uint64_t>(), 11u);
  EXPECT_EQ(j.at("config_hash").get<std::string>(), config_hash(*config_));
  EXPECT_EQ(j.at("threshold_table").at("thresholds_db").at("4").get<double>(), -5.0);
}

TEST_F(CampaignFixture, ThreadCountDoesNotChangeResults) {
  auto c = *config_;
  c.threads = 4;
  EXPECT_EQ(render(c, run_campaign(c, synthetic_table())), render(*config_, *bundle_));
}

TEST_F(CampaignFixture, ManifestReplayIsByteIdentical) {
  const auto dir = scratch("replay");
  emit_metrics(*config_, *bundle_, dir);
  const auto c = config_from_manifest(dir / "manifest.json");
  EXPECT_EQ(render(c, run_campaign(c, synthetic_table())), render(*config_, *bundle_));
  for (const auto& e : fs::directory_iterator(dir)) EXPECT_NE(e.path().extension(), ".tmp");
  fs::remove_all(dir);
}

TEST(Campaign, ZeroDropsGiveEmptyBundle) {
  auto c = small_config();
  c.n_drops = 0;
  const auto b = run_campaign(c, synthetic_table());
  EXPECT_EQ(b.schemes.size(), 4u);
  for (const auto& s : b.sinr) EXPECT_TRUE(s.empty());
  const auto files = render(c, b);
  EXPECT_EQ(lines(files.at("summary.csv")).size(), 5u);
  const auto j = nlohmann::json::parse(files.at("manifest.json"));
  EXPECT_EQ(j.size(), 5u);
  EXPECT_EQ(lines(files.at("sinr_cdf.csv")), (std::vector<std::string>{schema::kSinrCdf}));
}

TEST(Campaign, SeedChangesResults) {
  auto a = small_config();
  auto b = small_config();
  b.seed = 12;
  EXPECT_NE(render(a, run_campaign(a, synthetic_table())).at("sinr_cdf.csv"),
            render(b, run_campaign(b, synthetic_table())).at("sinr_cdf.csv"));
}

TEST(Campaign, SchemeSubset) {
  auto c = parse("[campaign]\nseed = 3\nusers_per_sector = 10\ndrops = 1\nttis = 3\nschemes = bf_pdcch, legacy\n");
  const auto b = run_campaign(c, synthetic_table());
  ASSERT_EQ(b.schemes.size(), 2u);
  EXPECT_EQ(b.schemes[0].scheme, Scheme::kBfPdcch);
  EXPECT_THROW(b.scheme(Scheme::kOptimal), Error);
}

TEST(Cdf, Basic) {
  const auto c = empirical_cdf({3.0, 1.0, 2.0, 2.0});
  ASSERT_EQ(c.size(), 3u);
  EXPECT_EQ(c[0].value, 1.0);
  EXPECT_EQ(c[0].cdf, 0.25);
  EXPECT_EQ(c[1].cdf, 0.75);
  EXPECT_EQ(c[2].cdf, 1.0);
  EXPECT_TRUE(empirical_cdf({}).empty());
}

TEST(Cli, MissingConfigFailsWithoutOutputs) {
  const auto dir = scratch("cli_missing");
  EXPECT_NE(run("campaign " + (dir / "absent.profile").string() + " --out " + (dir / "o").string()), 0);
  EXPECT_FALSE(fs::exists(dir / "o" / "summary.csv"));
  EXPECT_FALSE(fs::exists(dir / "o" / "manifest.json"));
  fs::remove_all(dir);
}

TEST(Cli, UnknownSubcommandFails) {
  EXPECT_NE(run("frobnicate"), 0);
  EXPECT_NE(run(""), 0);
}

TEST(Cli, CampaignRunTwiceIsIdentical) {
  const auto dir = scratch("cli_twice");
  const auto cfg = dir / "small.profile";
  {
    std::ofstream out(cfg);
    out << "[campaign]\nseed = 5\nusers_per_sector = 20\ndrops = 1\nttis = 10\n"
           "[bler]\ntrials = 200\nmax_errors = 40\nsinr_step_db = 1\ncache = "
        << (dir / "cache").string() << "\n";
  }
  ASSERT_EQ(run("campaign " + cfg.string() + " --out " + (dir / "a").string()), 0);
  ASSERT_EQ(run("campaign " + cfg.string() + " --threads 3 --out " + (dir / "b").string()), 0);
  ASSERT_EQ(run("campaign " + (dir / "a" / "manifest.json").string() + " --out " + (dir / "c").string()), 0);
  std::size_t compared = 0;
  for (const auto& e : fs::directory_iterator(dir / "a")) {
    if (!e.is_regular_file()) continue;
    const auto name = e.path().filename();
    EXPECT_EQ(slurp(e.path()), slurp(dir / "b" / name)) << name;
    EXPECT_EQ(slurp(e.path()), slurp(dir / "c" / name)) << name;
    ++compared;
  }
  EXPECT_GE(compared, 6u);
  fs::remove_all(dir);
}

TEST(Cli, SeedFlagOverrides) {
  const auto dir = scratch("cli_seed");
  const auto cfg = dir / "small.profile";
  {
    std::ofstream out(cfg);
    out << "[campaign]\nusers_per_sector = 10\ndrops = 1\nttis = 3\n"
           "[bler]\ntrials = 200\nmax_errors = 40\nsinr_step_db = 1\ncache = "
        << (dir / "cache").string() << "\n";
  }
  EXPECT_NE(run("campaign " + cfg.string() + " --out " + (dir / "x").string()), 0);
  ASSERT_EQ(run("--seed 9 campaign " + cfg.string() + " --out " + (dir / "y").string()), 0);
  const auto j = nlohmann::json::parse(slurp(dir / "y" / "manifest.json"));
  EXPECT_EQ(j.at("seed").get<int>(), 9);
  fs::remove_all(dir);
}
