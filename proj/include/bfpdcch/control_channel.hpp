#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "bfpdcch/common.hpp"

namespace bfpdcch::control {

inline constexpr int kCssSize = 16;
inline constexpr int kDciPayloadBits = 31;
inline constexpr std::uint32_t kHashMultiplier = 39827;
inline constexpr std::uint32_t kHashModulus = 65537;

// Total PDCCH CCEs for (bandwidth, CFI): control-region REGs minus PCFICH and
// PHICH, divided by 9 REGs per CCE. Two CRS ports, PHICH Ng = 1.
inline int total_cces(double bandwidth_mhz, int cfi) {
  if (cfi < 1 || cfi > 3) throw Error("cce_capacity: CFI must be 1, 2 or 3");
  if (bandwidth_mhz != 20.0) throw Error("cce_capacity: only 20 MHz is tabulated");
  constexpr int n_rb = 100;
  // REGs per RB: 2 in a CRS symbol (symbol 0), 3 otherwise with two ports.
  const int regs_per_rb[3] = {2, 3, 3};
  int regs = 0;
  for (int s = 0; s < cfi; ++s) regs += regs_per_rb[s] * n_rb;
  constexpr int pcfich_regs = 4;
  constexpr int phich_groups = (n_rb + 7) / 8;  // ceil(Ng * N_RB / 8), Ng = 1
  constexpr int phich_regs = 3 * phich_groups;
  return (regs - pcfich_regs - phich_regs) / 9;
}

inline int cce_capacity(double bandwidth_mhz, int cfi, double dl_fraction) {
  if (dl_fraction < 0.0 || dl_fraction > 1.0) throw Error("cce_capacity: DL fraction outside [0, 1]");
  return static_cast<int>(std::floor(total_cces(bandwidth_mhz, cfi) * dl_fraction + 1e-9));
}

// Hash seed recursion Y_k = 39827 Y_{k-1} mod 65537 with Y_{-1} = rnti.
inline std::uint32_t hash_seed(std::uint32_t rnti, int subframe) {
  std::uint64_t y = rnti;
  for (int k = 0; k <= subframe; ++k) y = (kHashMultiplier * y) % kHashModulus;
  return static_cast<std::uint32_t>(y);
}

inline std::uint32_t rnti_for_user(int user_id) { return 0x003D + static_cast<std::uint32_t>(user_id); }

struct CceBlock {
  int start = 0;
  int length = 0;
  bool operator==(const CceBlock&) const = default;
};

// Candidate m of aggregation level L: CCEs L*((Y_k + m) mod floor(n_cce / L)) + i.
inline CceBlock candidate_block(std::uint32_t y_k, int m, Al al, int n_cce) {
  const int L = cces(al);
  if (n_cce < L) throw Error("candidate_indices: " + std::to_string(n_cce) + " CCEs cannot hold AL " + std::to_string(L));
  if (m < 0) throw Error("candidate_indices: negative candidate index");
  const auto blocks = static_cast<std::uint64_t>(n_cce / L);
  const auto slot = (static_cast<std::uint64_t>(y_k) + static_cast<std::uint64_t>(m)) % blocks;
  return {L * static_cast<int>(slot), L};
}

inline std::vector<int> candidate_indices(std::uint32_t y_k, int m, Al al, int n_cce) {
  const auto b = candidate_block(y_k, m, al, n_cce);
  std::vector<int> out(static_cast<std::size_t>(b.length));
  for (int i = 0; i < b.length; ++i) out[static_cast<std::size_t>(i)] = b.start + i;
  return out;
}

struct SearchSpaceParams {
  std::uint32_t y_k = 0;
  std::map<Al, int> candidates_per_al;

  void validate() const {
    for (const auto& [al, n] : candidates_per_al)
      if (n < 1) throw Error("SearchSpaceParams: candidate count for AL " + std::to_string(cces(al)) + " must be >= 1");
  }
};

inline std::map<Al, int> uss_candidate_counts() { return {{Al::L1, 6}, {Al::L2, 6}, {Al::L4, 2}, {Al::L8, 2}}; }
inline std::map<Al, int> css_candidate_counts() { return {{Al::L4, 4}, {Al::L8, 2}}; }

inline SearchSpaceParams uss_params(int user_id, int subframe) {
  return {hash_seed(rnti_for_user(user_id), subframe % 10), uss_candidate_counts()};
}
inline SearchSpaceParams css_params() { return {0, css_candidate_counts()}; }

// Candidate blocks for m = 0..count-1, duplicates dropped, order kept.
inline std::vector<CceBlock> enumerate_candidates(const SearchSpaceParams& params, Al al, int n_cce) {
  params.validate();
  const auto it = params.candidates_per_al.find(al);
  if (it == params.candidates_per_al.end() || n_cce < cces(al)) return {};
  std::vector<CceBlock> out;
  for (int m = 0; m < it->second; ++m) {
    const auto b = candidate_block(params.y_k, m, al, n_cce);
    if (std::find(out.begin(), out.end(), b) == out.end()) out.push_back(b);
  }
  return out;
}

enum class SearchSpace : std::uint8_t { kCss, kUss1, kUss2, kEpdcch };

inline const char* to_string(SearchSpace s) {
  switch (s) {
    case SearchSpace::kCss: return "CSS";
    case SearchSpace::kUss1: return "USS1";
    case SearchSpace::kUss2: return "USS2";
    case SearchSpace::kEpdcch: return "EPDCCH";
  }
  return "?";
}

struct DciRequest {
  int user_id = 0;
  int payload_bits = kDciPayloadBits;
  Al al = Al::L1;
  SearchSpace ss = SearchSpace::kUss1;
  std::vector<int> beams;  // 0-based beam rows
};

struct DciPlacement {
  DciRequest request;
  int start_cce = 0;
  int length = 0;
};

// Per-TTI CCE occupancy, one row per beam. A legacy grid has a single row.
class CceGrid {
 public:
  CceGrid(int n_cce, int beams) : n_cce_(n_cce), beams_(beams) {
    if (n_cce < 0) throw Error("CceGrid: negative CCE count");
    if (beams < 1) throw Error("CceGrid: at least one beam row required");
    occ_.assign(static_cast<std::size_t>(n_cce * beams), 0);
  }

  int n_cce() const { return n_cce_; }
  int beams() const { return beams_; }
  int css_size() const { return kCssSize; }

  bool occupied(int beam, int cce) const { return occ_[index(beam, cce)] != 0; }

  bool block_free(const CceBlock& b, const std::vector<int>& rows) const {
    if (b.start < 0 || b.start + b.length > n_cce_) return false;
    for (int r : rows)
      for (int c = b.start; c < b.start + b.length; ++c)
        if (occupied(r, c)) return false;
    return true;
  }

  void mark(const CceBlock& b, const std::vector<int>& rows, bool value) {
    for (int r : rows)
      for (int c = b.start; c < b.start + b.length; ++c) {
        auto& cell = occ_[index(r, c)];
        if (value && cell) throw Error("CceGrid: double booking at beam " + std::to_string(r) + " CCE " + std::to_string(c));
        cell = value ? 1 : 0;
      }
  }

  // CCE columns with at least one occupied row.
  int cces_used() const {
    int used = 0;
    for (int c = 0; c < n_cce_; ++c)
      for (int r = 0; r < beams_; ++r)
        if (occupied(r, c)) {
          ++used;
          break;
        }
    return used;
  }

  int cells_free() const { return static_cast<int>(std::count(occ_.begin(), occ_.end(), 0)); }

  std::vector<int> all_rows() const {
    std::vector<int> rows(static_cast<std::size_t>(beams_));
    for (int r = 0; r < beams_; ++r) rows[static_cast<std::size_t>(r)] = r;
    return rows;
  }

  bool operator==(const CceGrid&) const = default;

 private:
  std::size_t index(int beam, int cce) const {
    if (beam < 0 || beam >= beams_ || cce < 0 || cce >= n_cce_)
      throw Error("CceGrid: cell (" + std::to_string(beam) + ", " + std::to_string(cce) + ") out of range");
    return static_cast<std::size_t>(beam * n_cce_ + cce);
  }

  int n_cce_;
  int beams_;
  std::vector<std::uint8_t> occ_;
};

inline void validate_request(const CceGrid& grid, const DciRequest& req) {
  if (req.beams.empty()) throw Error("place_dci: request without beams");
  for (int b : req.beams)
    if (b < 0 || b >= grid.beams()) throw Error("place_dci: beam " + std::to_string(b) + " outside grid");
  if (req.ss == SearchSpace::kUss2 || req.ss == SearchSpace::kEpdcch) {
    if (req.beams.size() > 2) throw Error("place_dci: USS2 request must name one or two beams");
  } else if (static_cast<int>(req.beams.size()) != grid.beams()) {
    throw Error("place_dci: CSS/USS1 request must span every beam");
  }
}

// First candidate (lowest m) whose CCEs are free in every requested row. CSS
// candidates are restricted to the common region. nullopt means blocked.
inline std::optional<DciPlacement> place_dci(CceGrid& grid, const DciRequest& req, const SearchSpaceParams& params) {
  validate_request(grid, req);
  const int L = cces(req.al);
  const int span = req.ss == SearchSpace::kCss ? std::min(kCssSize, grid.n_cce()) : grid.n_cce();
  if (span < L) return std::nullopt;
  for (const auto& b : enumerate_candidates(params, req.al, span)) {
    if (grid.block_free(b, req.beams)) {
      grid.mark(b, req.beams, true);
      return DciPlacement{req, b.start, b.length};
    }
  }
  return std::nullopt;
}

inline void remove_dci(CceGrid& grid, const DciPlacement& p) {
  const CceBlock b{p.start_cce, p.length};
  for (int r : p.request.beams)
    for (int c = b.start; c < b.start + b.length; ++c)
      if (!grid.occupied(r, c)) throw Error("remove_dci: placement not present in grid");
  grid.mark(b, p.request.beams, false);
}

}  // namespace bfpdcch::control
