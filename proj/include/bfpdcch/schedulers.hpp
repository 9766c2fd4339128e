#pragma once

#include <algorithm>
#include <bitset>
#include <cstdint>
#include <deque>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "bfpdcch/common.hpp"
#include "bfpdcch/control_channel.hpp"
#include "bfpdcch/deployment_channel.hpp"
#include "bfpdcch/link_abstraction.hpp"

namespace bfpdcch::sched {

using control::CceBlock;
using control::CceGrid;
using control::DciPlacement;
using control::DciRequest;
using control::SearchSpace;

enum class Classification : std::uint8_t { kOneBeamUss2, kTwoBeamUss2, kAllBeamUss1 };

inline const char* to_string(Classification c) {
  switch (c) {
    case Classification::kOneBeamUss2: return "one_beam_uss2";
    case Classification::kTwoBeamUss2: return "two_beam_uss2";
    case Classification::kAllBeamUss1: return "all_beam_uss1";
  }
  return "?";
}

enum class Scheme : std::uint8_t { kLegacy, kOptimal, kEpdcch, kBfPdcch };

inline constexpr std::array<Scheme, 4> kAllSchemes{Scheme::kLegacy, Scheme::kOptimal, Scheme::kEpdcch, Scheme::kBfPdcch};

inline const char* to_string(Scheme s) {
  switch (s) {
    case Scheme::kLegacy: return "legacy";
    case Scheme::kOptimal: return "optimal";
    case Scheme::kEpdcch: return "epdcch";
    case Scheme::kBfPdcch: return "bf_pdcch";
  }
  return "?";
}

inline Scheme scheme_from_string(std::string_view name) {
  for (auto s : kAllSchemes)
    if (name == to_string(s)) return s;
  throw Error("unknown scheme '" + std::string(name) + "'");
}

struct UserSchedState {
  int user_id = 0;
  AlOrOutage al_legacy;
  AlOrOutage al_one_beam;
  AlOrOutage al_two_beam;
  AlOrOutage al_all_beams;
  Classification classification = Classification::kAllBeamUss1;
  int best_beam = 0;  // 0-based
  int best_pair = 0;  // rows best_pair and best_pair + 1

  // AL used by BF-PDCCH under the classification; nullopt = outage.
  AlOrOutage bf_al() const {
    switch (classification) {
      case Classification::kOneBeamUss2: return al_one_beam;
      case Classification::kTwoBeamUss2: return al_two_beam;
      case Classification::kAllBeamUss1: return al_all_beams;
    }
    return std::nullopt;
  }

  std::vector<int> bf_rows(int beams) const {
    switch (classification) {
      case Classification::kOneBeamUss2: return {best_beam};
      case Classification::kTwoBeamUss2:
        if (best_pair + 1 >= beams) return {best_pair};
        return {best_pair, best_pair + 1};
      case Classification::kAllBeamUss1: break;
    }
    std::vector<int> rows(static_cast<std::size_t>(beams));
    std::iota(rows.begin(), rows.end(), 0);
    return rows;
  }

  SearchSpace bf_space() const {
    return classification == Classification::kAllBeamUss1 ? SearchSpace::kUss1 : SearchSpace::kUss2;
  }
};

inline AlOrOutage al_for(double sinr_db, const abstraction::AlThresholdTable& table) {
  return abstraction::sinr_to_al(sinr_db, table);
}

// Best beam if it clears the AL=4 gate, else the best adjacent
// pair, else every beam.
inline UserSchedState classify_user(const deploy::SinrReport& r, const abstraction::AlThresholdTable& table) {
  const double gate = table.threshold(Al::L4);
  UserSchedState u;
  u.user_id = r.user_id;
  u.best_beam = r.best_beam;
  u.best_pair = r.best_pair;
  u.al_legacy = al_for(r.legacy_sinr_db, table);
  u.al_one_beam = al_for(r.sinr_one_beam_db, table);
  u.al_two_beam = al_for(r.sinr_two_beam_db, table);
  u.al_all_beams = al_for(r.sinr_all_beams_db, table);
  if (r.sinr_one_beam_db > gate) u.classification = Classification::kOneBeamUss2;
  else if (r.sinr_two_beam_db > gate) u.classification = Classification::kTwoBeamUss2;
  else u.classification = Classification::kAllBeamUss1;
  return u;
}

struct SchedulerConfig {
  int n_cce = 42;
  int beams = 8;
  int epdcch_prbs = 4;
  int ecces_per_prb = 4;
  int epdcch_layers = 4;
  std::vector<Al> css_load{Al::L8, Al::L4};
  int exact_user_limit = 16;
  long exact_node_budget = 2'000'000;

  int epdcch_ecces() const { return epdcch_prbs * ecces_per_prb; }
  int css_cces() const {
    int n = 0;
    for (auto al : css_load) n += cces(al);
    return n;
  }

  void validate() const {
    if (n_cce < 1 || n_cce > 256) throw Error("SchedulerConfig: n_cce must lie in [1, 256]");
    if (beams < 1) throw Error("SchedulerConfig: at least one beam required");
    if (epdcch_prbs != 0 && epdcch_prbs != 2 && epdcch_prbs != 4 && epdcch_prbs != 8)
      throw Error("SchedulerConfig: epdcch_prbs must be 0, 2, 4 or 8");
    if (ecces_per_prb < 1 || epdcch_layers < 1) throw Error("SchedulerConfig: invalid EPDCCH geometry");
    if (css_cces() > control::kCssSize) throw Error("SchedulerConfig: CSS load exceeds the common region");
  }
};

struct TtiResult {
  Scheme scheme = Scheme::kLegacy;
  int tti = 0;
  std::vector<DciPlacement> placements;  // user DCIs only
  std::vector<DciPlacement> common;      // CSS DCIs
  std::vector<int> blocked;
  int cce_used = 0;
  int users_scheduled = 0;
};

// Common DCIs go first, across every row, inside the common region.
// Negative user ids mark them.
inline std::vector<DciPlacement> place_common(CceGrid& grid, std::span<const Al> load) {
  std::vector<DciPlacement> out;
  const auto params = control::css_params();
  int id = -1;
  for (auto al : load) {
    DciRequest req{id--, control::kDciPayloadBits, al, SearchSpace::kCss, grid.all_rows()};
    auto p = control::place_dci(grid, req, params);
    if (!p) throw Error("place_common: CSS load does not fit the common region");
    out.push_back(*p);
  }
  return out;
}

inline TtiResult finish(Scheme scheme, int tti, const CceGrid& grid, std::vector<DciPlacement> common,
                        std::vector<DciPlacement> placed, std::vector<int> blocked, int extra_used = 0) {
  TtiResult r;
  r.scheme = scheme;
  r.tti = tti;
  r.common = std::move(common);
  r.placements = std::move(placed);
  r.blocked = std::move(blocked);
  r.users_scheduled = static_cast<int>(r.placements.size());
  r.cce_used = grid.cces_used() + extra_used;
  return r;
}

inline TtiResult schedule_legacy(std::span<const UserSchedState> users, CceGrid& grid, int tti,
                                 std::span<const Al> css_load) {
  if (grid.beams() != 1) throw Error("schedule_legacy: grid must have a single row");
  auto common = place_common(grid, css_load);
  std::vector<DciPlacement> placed;
  std::vector<int> blocked;
  for (const auto& u : users) {
    if (grid.cells_free() == 0) break;
    if (!u.al_legacy) throw Error("schedule_legacy: outage user in the queue");
    DciRequest req{u.user_id, control::kDciPayloadBits, *u.al_legacy, SearchSpace::kUss1, {0}};
    if (auto p = control::place_dci(grid, req, control::uss_params(u.user_id, tti))) placed.push_back(*p);
    else blocked.push_back(u.user_id);
  }
  return finish(Scheme::kLegacy, tti, grid, std::move(common), std::move(placed), std::move(blocked));
}

// ---- Set packing on a single row ---------------------------------------------------

namespace detail {

using Mask = std::bitset<256>;

struct PackUser {
  int index;  // position in the input list
  int length;
  std::vector<Mask> blocks;
  std::vector<int> starts;
};

struct Packing {
  std::vector<int> choice;  // per user: candidate index or -1
  int count = 0;
  int cells = 0;
  bool better_than(const Packing& o) const { return count > o.count || (count == o.count && cells < o.cells); }
};

inline Mask block_mask(int start, int length) {
  Mask m;
  for (int c = start; c < start + length; ++c) m.set(static_cast<std::size_t>(c));
  return m;
}

inline Packing first_fit(const std::vector<PackUser>& us, const Mask& base, const std::vector<std::size_t>& order) {
  Packing p;
  p.choice.assign(us.size(), -1);
  Mask occ = base;
  for (auto i : order) {
    const auto& u = us[i];
    for (std::size_t k = 0; k < u.blocks.size(); ++k) {
      if ((occ & u.blocks[k]).none()) {
        occ |= u.blocks[k];
        p.choice[i] = static_cast<int>(k);
        ++p.count;
        p.cells += u.length;
        break;
      }
    }
  }
  return p;
}

class ExactPacker {
 public:
  ExactPacker(const std::vector<PackUser>& us, const Mask& base, long budget) : us_(us), base_(base), budget_(budget) {}

  Packing solve(Packing incumbent) {
    best_ = std::move(incumbent);
    cur_.choice.assign(us_.size(), -1);
    cur_.count = 0;
    cur_.cells = 0;
    dfs(0, base_);
    return best_;
  }

 private:
  void dfs(std::size_t i, const Mask& occ) {
    if (++nodes_ > budget_) return;
    if (cur_.better_than(best_)) best_ = cur_;
    if (i == us_.size()) return;
    const int remaining = static_cast<int>(us_.size() - i);
    const int free_cells = static_cast<int>(occ.size() - occ.count());
    const int bound = cur_.count + std::min(remaining, fit_bound(i, free_cells));
    if (bound < best_.count || (bound == best_.count && cur_.cells >= best_.cells)) return;
    const auto& u = us_[i];
    for (std::size_t k = 0; k < u.blocks.size(); ++k) {
      if ((occ & u.blocks[k]).any()) continue;
      cur_.choice[i] = static_cast<int>(k);
      ++cur_.count;
      cur_.cells += u.length;
      dfs(i + 1, occ | u.blocks[k]);
      --cur_.count;
      cur_.cells -= u.length;
      cur_.choice[i] = -1;
    }
    dfs(i + 1, occ);
  }

  // Most users from [i, n) that fit into free_cells, smallest lengths first.
  int fit_bound(std::size_t i, int free_cells) const {
    std::vector<int> lens;
    for (std::size_t j = i; j < us_.size(); ++j) lens.push_back(us_[j].length);
    std::sort(lens.begin(), lens.end());
    int n = 0;
    for (int l : lens) {
      if (free_cells < l) break;
      free_cells -= l;
      ++n;
    }
    return n;
  }

  const std::vector<PackUser>& us_;
  Mask base_;
  long budget_;
  long nodes_ = 0;
  Packing best_, cur_;
};

inline Packing largest_first(const std::vector<PackUser>& us, const Mask& base) {
  std::vector<std::size_t> order(us.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return us[a].length > us[b].length; });
  return first_fit(us, base, order);
}

// Single swaps: an unplaced user takes a block held by exactly one placed
// user, which must move to another free candidate.
inline Packing swap_search(const std::vector<PackUser>& us, const Mask& base, Packing p) {
  auto occupancy = [&] {
    Mask occ = base;
    for (std::size_t i = 0; i < us.size(); ++i)
      if (p.choice[i] >= 0) occ |= us[i].blocks[static_cast<std::size_t>(p.choice[i])];
    return occ;
  };
  bool improved = true;
  for (int round = 0; improved && round < 64; ++round) {
    improved = false;
    for (std::size_t u = 0; u < us.size() && !improved; ++u) {
      if (p.choice[u] >= 0) continue;
      for (std::size_t k = 0; k < us[u].blocks.size() && !improved; ++k) {
        const Mask& want = us[u].blocks[k];
        if ((base & want).any()) continue;
        std::vector<std::size_t> holders;
        for (std::size_t v = 0; v < us.size(); ++v)
          if (p.choice[v] >= 0 && (us[v].blocks[static_cast<std::size_t>(p.choice[v])] & want).any()) holders.push_back(v);
        if (holders.size() != 1) continue;
        const auto v = holders[0];
        const int old = p.choice[v];
        p.choice[v] = -1;
        Mask occ = occupancy() | want;
        for (std::size_t kv = 0; kv < us[v].blocks.size(); ++kv) {
          if (static_cast<int>(kv) == old || (occ & us[v].blocks[kv]).any()) continue;
          p.choice[v] = static_cast<int>(kv);
          p.choice[u] = static_cast<int>(k);
          ++p.count;
          p.cells += us[u].length;
          improved = true;
          break;
        }
        if (!improved) p.choice[v] = old;
      }
    }
  }
  return p;
}

}  // namespace detail

// Maximum-cardinality packing of the users' candidate blocks (ties: fewest
// CCEs). Exact branch and bound up to exact_user_limit users, greedy with
// swaps beyond. Never worse than first-fit on the same instance.
inline TtiResult schedule_optimal(std::span<const UserSchedState> users, CceGrid& grid, int tti,
                                  std::span<const Al> css_load, int exact_user_limit = 16,
                                  long node_budget = 2'000'000) {
  if (grid.beams() != 1) throw Error("schedule_optimal: grid must have a single row");
  if (grid.n_cce() > 256) throw Error("schedule_optimal: more than 256 CCEs");
  auto common = place_common(grid, css_load);
  detail::Mask base;
  for (int c = 0; c < grid.n_cce(); ++c)
    if (grid.occupied(0, c)) base.set(static_cast<std::size_t>(c));
  for (int c = grid.n_cce(); c < 256; ++c) base.set(static_cast<std::size_t>(c));

  std::vector<detail::PackUser> us;
  for (std::size_t i = 0; i < users.size(); ++i) {
    const auto& u = users[i];
    if (!u.al_legacy) throw Error("schedule_optimal: outage user in the queue");
    detail::PackUser pu{static_cast<int>(i), cces(*u.al_legacy), {}, {}};
    if (grid.n_cce() >= pu.length)
      for (const auto& b : control::enumerate_candidates(control::uss_params(u.user_id, tti), *u.al_legacy, grid.n_cce())) {
        pu.blocks.push_back(detail::block_mask(b.start, b.length));
        pu.starts.push_back(b.start);
      }
    us.push_back(std::move(pu));
  }

  std::vector<std::size_t> arrival(us.size());
  std::iota(arrival.begin(), arrival.end(), 0);
  detail::Packing best = detail::first_fit(us, base, arrival);
  if (static_cast<int>(us.size()) <= exact_user_limit) {
    detail::ExactPacker packer(us, base, node_budget);
    best = packer.solve(best);
  } else {
    auto g = detail::swap_search(us, base, detail::largest_first(us, base));
    auto f = detail::swap_search(us, base, best);
    if (g.better_than(best)) best = std::move(g);
    if (f.better_than(best)) best = std::move(f);
  }

  std::vector<DciPlacement> placed;
  std::vector<int> blocked;
  for (std::size_t i = 0; i < us.size(); ++i) {
    const auto& u = users[i];
    if (best.choice[i] < 0) {
      blocked.push_back(u.user_id);
      continue;
    }
    const int start = us[i].starts[static_cast<std::size_t>(best.choice[i])];
    const CceBlock b{start, us[i].length};
    grid.mark(b, {0}, true);
    placed.push_back({DciRequest{u.user_id, control::kDciPayloadBits, *u.al_legacy, SearchSpace::kUss1, {0}}, start,
                      us[i].length});
  }
  TtiResult r = finish(Scheme::kOptimal, tti, grid, std::move(common), std::move(placed), std::move(blocked));
  return r;
}

// Beamformed EPDCCH region: ecces x layers, search-space candidates over the ECCEs,
// co-scheduled layers on a block must serve distinct best beams. Users that do
// not fit (or have no one-beam AL) fall back to first-fit PDCCH. EPDCCH
// placements report start_cce offset by the PDCCH CCE count.
inline TtiResult schedule_epdcch(std::span<const UserSchedState> users, CceGrid& pdcch, int tti,
                                 std::span<const Al> css_load, int ecces, int layers) {
  if (pdcch.beams() != 1) throw Error("schedule_epdcch: PDCCH grid must have a single row");
  if (ecces < 0 || layers < 1) throw Error("schedule_epdcch: invalid EPDCCH region");
  auto common = place_common(pdcch, css_load);
  std::vector<int> beam_at(static_cast<std::size_t>(ecces * layers), -1);
  auto owner = [&](int layer, int e) -> int& { return beam_at[static_cast<std::size_t>(layer * ecces + e)]; };
  int ecces_used = 0;
  std::vector<char> ecce_used(static_cast<std::size_t>(ecces), 0);

  std::vector<DciPlacement> placed;
  std::vector<int> blocked;
  int epdcch_free = ecces * layers;
  for (const auto& u : users) {
    if (epdcch_free == 0 && pdcch.cells_free() == 0) break;
    bool done = false;
    if (ecces > 0 && u.al_one_beam && cces(*u.al_one_beam) <= ecces) {
      const auto al = *u.al_one_beam;
      for (const auto& b : control::enumerate_candidates(control::uss_params(u.user_id, tti), al, ecces)) {
        for (int l = 0; l < layers && !done; ++l) {
          bool ok = true;
          for (int e = b.start; e < b.start + b.length && ok; ++e) {
            if (owner(l, e) >= 0) ok = false;
            for (int o = 0; o < layers && ok; ++o)
              if (o != l && owner(o, e) == u.best_beam) ok = false;
          }
          if (!ok) continue;
          epdcch_free -= b.length;
          for (int e = b.start; e < b.start + b.length; ++e) {
            owner(l, e) = u.best_beam;
            if (!ecce_used[static_cast<std::size_t>(e)]) {
              ecce_used[static_cast<std::size_t>(e)] = 1;
              ++ecces_used;
            }
          }
          placed.push_back({DciRequest{u.user_id, control::kDciPayloadBits, al, SearchSpace::kEpdcch, {l}},
                            pdcch.n_cce() + b.start, b.length});
          done = true;
        }
        if (done) break;
      }
    }
    if (done) continue;
    if (u.al_legacy) {
      DciRequest req{u.user_id, control::kDciPayloadBits, *u.al_legacy, SearchSpace::kUss1, {0}};
      if (auto p = control::place_dci(pdcch, req, control::uss_params(u.user_id, tti))) {
        placed.push_back(*p);
        continue;
      }
    }
    blocked.push_back(u.user_id);
  }
  return finish(Scheme::kEpdcch, tti, pdcch, std::move(common), std::move(placed), std::move(blocked), ecces_used);
}

inline TtiResult schedule_bf_pdcch(std::span<const UserSchedState> users, CceGrid& grid, int tti,
                                   std::span<const Al> css_load) {
  auto common = place_common(grid, css_load);
  std::vector<DciPlacement> placed;
  std::vector<int> blocked;
  for (const auto& u : users) {
    if (grid.cells_free() == 0) break;
    const auto al = u.bf_al();
    if (!al) throw Error("schedule_bf_pdcch: outage user in the queue");
    DciRequest req{u.user_id, control::kDciPayloadBits, *al, u.bf_space(), u.bf_rows(grid.beams())};
    if (auto p = control::place_dci(grid, req, control::uss_params(u.user_id, tti))) placed.push_back(*p);
    else blocked.push_back(u.user_id);
  }
  return finish(Scheme::kBfPdcch, tti, grid, std::move(common), std::move(placed), std::move(blocked));
}

// ---- Multi-TTI driver ------------------------------------------------------------

inline bool eligible(const UserSchedState& u, Scheme s) {
  switch (s) {
    case Scheme::kLegacy:
    case Scheme::kOptimal: return u.al_legacy.has_value();
    case Scheme::kEpdcch: return u.al_legacy.has_value() || u.al_one_beam.has_value();
    case Scheme::kBfPdcch: return u.bf_al().has_value();
  }
  return false;
}

// CCEs a scheme may use per TTI, the users-per-CCE denominator.
inline int available_cces(Scheme s, const SchedulerConfig& cfg) {
  return cfg.n_cce + (s == Scheme::kEpdcch ? cfg.epdcch_ecces() : 0);
}

// Number of queue users a first-fit pass examines before the grid is full.
inline std::size_t first_fit_horizon(std::span<const UserSchedState> queue, int tti, const SchedulerConfig& cfg) {
  CceGrid g(cfg.n_cce, 1);
  const auto r = schedule_legacy(queue, g, tti, cfg.css_load);
  return static_cast<std::size_t>(r.users_scheduled) + r.blocked.size();
}

// One TTI over the queue in FIFO order. Optimal repacks the users first-fit
// would have examined.
inline TtiResult schedule_tti(Scheme s, std::span<const UserSchedState> queue, int tti, const SchedulerConfig& cfg) {
  switch (s) {
    case Scheme::kLegacy: {
      CceGrid g(cfg.n_cce, 1);
      return schedule_legacy(queue, g, tti, cfg.css_load);
    }
    case Scheme::kOptimal: {
      const auto horizon = first_fit_horizon(queue, tti, cfg);
      CceGrid g(cfg.n_cce, 1);
      auto r = schedule_optimal(queue.first(horizon), g, tti, cfg.css_load, cfg.exact_user_limit, cfg.exact_node_budget);
      auto fill = schedule_legacy(queue.subspan(horizon), g, tti, {});
      r.placements.insert(r.placements.end(), fill.placements.begin(), fill.placements.end());
      r.blocked.insert(r.blocked.end(), fill.blocked.begin(), fill.blocked.end());
      r.users_scheduled = static_cast<int>(r.placements.size());
      r.cce_used = g.cces_used();
      return r;
    }
    case Scheme::kEpdcch: {
      CceGrid g(cfg.n_cce, 1);
      return schedule_epdcch(queue, g, tti, cfg.css_load, cfg.epdcch_ecces(), cfg.epdcch_layers);
    }
    case Scheme::kBfPdcch: {
      CceGrid g(cfg.n_cce, cfg.beams);
      return schedule_bf_pdcch(queue, g, tti, cfg.css_load);
    }
  }
  throw Error("schedule_tti: unknown scheme");
}

// Full-buffer FIFO over the eligible users: every TTI scans the queue until
// the grid is exhausted; unscheduled users keep their order at the head and
// scheduled ones rejoin at the tail.
inline std::vector<TtiResult> run_multi_tti(std::span<const UserSchedState> users, Scheme scheme, int n_tti,
                                            const SchedulerConfig& cfg) {
  if (n_tti < 1) throw Error("run_multi_tti: n_tti must be >= 1");
  cfg.validate();
  std::vector<UserSchedState> queue;
  for (const auto& u : users)
    if (eligible(u, scheme)) queue.push_back(u);
  std::vector<TtiResult> out;
  out.reserve(static_cast<std::size_t>(n_tti));
  std::vector<UserSchedState> head, tail;
  std::vector<int> ids;
  for (int t = 0; t < n_tti; ++t) {
    auto r = schedule_tti(scheme, queue, t, cfg);
    ids.clear();
    for (const auto& p : r.placements) ids.push_back(p.request.user_id);
    std::sort(ids.begin(), ids.end());
    head.clear();
    tail.clear();
    for (const auto& u : queue) (std::binary_search(ids.begin(), ids.end(), u.user_id) ? tail : head).push_back(u);
    queue.swap(head);
    queue.insert(queue.end(), tail.begin(), tail.end());
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace bfpdcch::sched
