#include <gtest/gtest.h>

#include <random>
#include <set>

#include "bfpdcch/control_channel.hpp"
#include "bfpdcch/random.hpp"

using namespace bfpdcch;
using namespace bfpdcch::control;

namespace {

// Search-space block formula, restated without the library.
std::vector<int> reference_indices(std::uint32_t y, int m, int L, int n_cce) {
  std::vector<int> out;
  const long long blocks = n_cce / L;
  const long long slot = (static_cast<long long>(y) + m) % blocks;
  for (int i = 0; i < L; ++i) out.push_back(static_cast<int>(L * slot + i));
  return out;
}

DciRequest uss2(int id, Al al, std::vector<int> beams) {
  return DciRequest{id, kDciPayloadBits, al, SearchSpace::kUss2, std::move(beams)};
}

}  // namespace

TEST(CceCapacity, PaperValues) {
  EXPECT_EQ(cce_capacity(20.0, 3, 0.5), 42);
  EXPECT_EQ(cce_capacity(20.0, 3, 1.0), 84);
  EXPECT_EQ(cce_capacity(20.0, 3, 0.0), 0);
  EXPECT_THROW(cce_capacity(20.0, 4, 0.5), Error);
  EXPECT_THROW(cce_capacity(20.0, 3, 1.5), Error);
  EXPECT_THROW(cce_capacity(10.0, 3, 0.5), Error);
}

TEST(CandidateIndices, WorkedExamples) {
  EXPECT_EQ(candidate_indices(0, 0, Al::L4, 42), (std::vector<int>{0, 1, 2, 3}));
  EXPECT_EQ(candidate_indices(123, 1, Al::L2, 42), (std::vector<int>{38, 39}));
  EXPECT_EQ(candidate_indices(9, 0, Al::L8, 42), (std::vector<int>{32, 33, 34, 35, 36, 37, 38, 39}));
}

TEST(CandidateIndices, RejectsTooSmallGrid) {
  EXPECT_THROW(candidate_indices(0, 0, Al::L8, 7), Error);
  EXPECT_THROW(candidate_indices(0, -1, Al::L1, 7), Error);
}

TEST(CandidateIndicesProperty, MatchesReferenceOnRandomTuples) {
  auto rng = make_rng(21, {});
  for (int i = 0; i < 10000; ++i) {
    const auto y = static_cast<std::uint32_t>(rng() % kHashModulus);
    const int m = static_cast<int>(rng() % 16);
    const Al al = kAllAls[rng() % 4];
    const int n = cces(al) + static_cast<int>(rng() % 120);
    ASSERT_EQ(candidate_indices(y, m, al, n), reference_indices(y, m, cces(al), n));
  }
}

TEST(CandidateIndicesProperty, InRangeAndAligned) {
  for (std::uint32_t y = 0; y < kHashModulus; y += 37)
    for (auto al : kAllAls)
      for (int n : {8, 16, 42, 84}) {
        const auto idx = candidate_indices(y, static_cast<int>(y % 6), al, n);
        EXPECT_EQ(idx.front() % cces(al), 0);
        for (int c : idx) {
          EXPECT_GE(c, 0);
          EXPECT_LT(c, n);
        }
      }
}

TEST(HashSeed, Recursion) {
  EXPECT_EQ(hash_seed(1, 0), 39827u);
  EXPECT_EQ(hash_seed(1, 1), static_cast<std::uint32_t>((39827ull * 39827ull) % 65537ull));
}

TEST(EnumerateCandidates, Examples) {
  SearchSpaceParams p{0, {{Al::L1, 6}}};
  const auto c = enumerate_candidates(p, Al::L1, 42);
  ASSERT_EQ(c.size(), 6u);
  for (int m = 0; m < 6; ++m) EXPECT_EQ(c[static_cast<std::size_t>(m)], (CceBlock{m, 1}));

  SearchSpaceParams css{0, {{Al::L8, 2}}};
  EXPECT_EQ(enumerate_candidates(css, Al::L8, 16), (std::vector<CceBlock>{{0, 8}, {8, 8}}));

  SearchSpaceParams one{5, {{Al::L4, 1}}};
  EXPECT_EQ(enumerate_candidates(one, Al::L4, 4), (std::vector<CceBlock>{{0, 4}}));
  // Duplicates are dropped when fewer blocks exist than candidates.
  SearchSpaceParams dup{0, {{Al::L8, 2}}};
  EXPECT_EQ(enumerate_candidates(dup, Al::L8, 8).size(), 1u);
  EXPECT_TRUE(enumerate_candidates(p, Al::L8, 42).empty());
  EXPECT_TRUE(enumerate_candidates(css, Al::L8, 7).empty());
}

TEST(CceGrid, CssPlacementSpansEveryRow) {
  CceGrid g(42, 8);
  EXPECT_EQ(g.css_size(), 16);
  const auto p = place_dci(g, {-1, kDciPayloadBits, Al::L8, SearchSpace::kCss, g.all_rows()}, css_params());
  ASSERT_TRUE(p);
  EXPECT_EQ(p->start_cce, 0);
  for (int r = 0; r < 8; ++r)
    for (int c = 0; c < 8; ++c) EXPECT_TRUE(g.occupied(r, c));
  EXPECT_EQ(g.cces_used(), 8);
}

TEST(CceGrid, CssStaysInCommonRegion) {
  CceGrid g(42, 1);
  std::vector<DciPlacement> placed;
  for (int i = 0; i < 10; ++i)
    if (auto p = place_dci(g, {-1 - i, kDciPayloadBits, Al::L4, SearchSpace::kCss, {0}}, css_params()))
      placed.push_back(*p);
  EXPECT_EQ(placed.size(), 4u);
  for (const auto& p : placed) EXPECT_LE(p.start_cce + p.length, kCssSize);
}

TEST(CceGrid, Uss2SameBlockDifferentBeams) {
  CceGrid g(42, 8);
  const SearchSpaceParams params{7, uss_candidate_counts()};
  const auto a = place_dci(g, uss2(1, Al::L4, {1}), params);
  const auto b = place_dci(g, uss2(2, Al::L4, {2}), params);
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->start_cce, b->start_cce);
  for (int c = a->start_cce; c < a->start_cce + 4; ++c) {
    EXPECT_TRUE(g.occupied(1, c));
    EXPECT_TRUE(g.occupied(2, c));
    EXPECT_FALSE(g.occupied(0, c));
  }
}

TEST(CceGrid, BlockedWhenAllCandidatesTaken) {
  CceGrid g(42, 1);
  const SearchSpaceParams params{3, {{Al::L8, 2}}};
  DciRequest r{1, kDciPayloadBits, Al::L8, SearchSpace::kUss1, {0}};
  EXPECT_TRUE(place_dci(g, r, params));
  EXPECT_TRUE(place_dci(g, r, params));
  EXPECT_FALSE(place_dci(g, r, params));
}

TEST(CceGrid, ValidatesRequests) {
  CceGrid g(42, 4);
  const auto p = css_params();
  EXPECT_THROW(place_dci(g, {1, kDciPayloadBits, Al::L1, SearchSpace::kUss1, {0}}, p), Error);
  EXPECT_THROW(place_dci(g, uss2(1, Al::L1, {0, 1, 2}), p), Error);
  EXPECT_THROW(place_dci(g, uss2(1, Al::L1, {4}), p), Error);
  EXPECT_THROW(place_dci(g, uss2(1, Al::L1, {}), p), Error);
  EXPECT_THROW(CceGrid(-1, 1), Error);
  EXPECT_THROW(CceGrid(4, 0), Error);
  EXPECT_THROW(g.occupied(4, 0), Error);
}

TEST(CceGrid, DoubleBookingThrows) {
  CceGrid g(16, 1);
  g.mark({0, 4}, {0}, true);
  EXPECT_THROW(g.mark({2, 4}, {0}, true), Error);
}

TEST(CceGridProperty, RandomSequencesNeverDoubleBookAndRemoveRestores) {
  auto rng = make_rng(31, {});
  for (int trial = 0; trial < 300; ++trial) {
    const int beams = 1 + static_cast<int>(rng() % 8);
    CceGrid g(42, beams);
    std::vector<DciPlacement> log;
    std::vector<CceGrid> before;
    for (int k = 0; k < 40; ++k) {
      const int id = static_cast<int>(rng() % 1000);
      const Al al = kAllAls[rng() % 4];
      DciRequest req;
      const int kind = static_cast<int>(rng() % 3);
      if (kind == 0) req = {id, kDciPayloadBits, al, SearchSpace::kUss1, g.all_rows()};
      else {
        const int b = static_cast<int>(rng() % static_cast<unsigned>(beams));
        std::vector<int> rows{b};
        if (kind == 2 && b + 1 < beams) rows.push_back(b + 1);
        req = uss2(id, al, rows);
      }
      CceGrid snapshot = g;
      if (auto p = place_dci(g, req, uss_params(id, trial % 10))) {
        log.push_back(*p);
        before.push_back(snapshot);
      }
    }
    // Replay the log: every (row, cce) cell is claimed at most once.
    std::vector<int> claims(static_cast<std::size_t>(42 * beams), 0);
    for (const auto& p : log)
      for (int r : p.request.beams)
        for (int c = p.start_cce; c < p.start_cce + p.length; ++c) ++claims[static_cast<std::size_t>(r * 42 + c)];
    for (int v : claims) EXPECT_LE(v, 1);
    // At most one DCI per row on any block, so at most `beams` share it.
    std::map<std::pair<int, int>, int> per_block;
    for (const auto& p : log)
      if (p.request.ss == SearchSpace::kUss2) ++per_block[{p.start_cce, p.length}];
    for (const auto& [blk, n] : per_block) EXPECT_LE(n, beams);
    // Undo in reverse order.
    for (std::size_t i = log.size(); i-- > 0;) {
      remove_dci(g, log[i]);
      EXPECT_TRUE(g == before[i]);
    }
  }
}

TEST(CceGrid, RemoveRejectsAbsentPlacement) {
  CceGrid g(16, 1);
  DciPlacement p{{1, kDciPayloadBits, Al::L2, SearchSpace::kUss1, {0}}, 4, 2};
  EXPECT_THROW(remove_dci(g, p), Error);
}
