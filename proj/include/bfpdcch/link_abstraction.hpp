#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "bfpdcch/common.hpp"
#include "bfpdcch/link_chain.hpp"

namespace bfpdcch::abstraction {

struct InterferenceProfile {
  double signal_power = 0.0;
  std::vector<double> alphas;  // per-beam leak powers
  double noise_var = 1.0;
  double external_interference = 0.0;  // I_wrap

  void validate() const {
    if (signal_power < 0 || external_interference < 0) throw Error("InterferenceProfile: negative power");
    if (!(noise_var > 0)) throw Error("InterferenceProfile: noise variance must be positive");
    for (double a : alphas)
      if (a < 0) throw Error("InterferenceProfile: negative leak power");
  }
};

// Leak from the other beams counts twice: once through the corrupted channel
// estimate and once on the data itself.
inline double sinr_abs(const InterferenceProfile& p) {
  p.validate();
  double leak = 0.0;
  for (double a : p.alphas) leak += a;
  return p.signal_power / (p.noise_var + p.external_interference + 2.0 * leak);
}

// Pool-adjacent-violators fit of a non-increasing sequence (equal weights
// unless given).
inline std::vector<double> isotonic_non_increasing(std::span<const double> y, std::span<const double> w = {}) {
  struct Block {
    double sum_wy, sum_w;
    std::size_t count;
    double mean() const { return sum_wy / sum_w; }
  };
  std::vector<Block> blocks;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double wi = w.empty() ? 1.0 : w[i];
    blocks.push_back({wi * y[i], wi, 1});
    while (blocks.size() > 1 && blocks[blocks.size() - 2].mean() < blocks.back().mean()) {
      auto last = blocks.back();
      blocks.pop_back();
      blocks.back().sum_wy += last.sum_wy;
      blocks.back().sum_w += last.sum_w;
      blocks.back().count += last.count;
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) out.insert(out.end(), b.count, b.mean());
  return out;
}

struct AlThresholdTable {
  std::map<Al, double> thresholds_db;  // AL -> minimum SINR for BLER <= target; missing = unreachable
  double target = 0.01;
  std::string source;

  bool complete() const { return thresholds_db.size() == kAllAls.size(); }

  double threshold(Al al) const {
    const auto it = thresholds_db.find(al);
    if (it == thresholds_db.end()) throw Error("AlThresholdTable: AL " + std::to_string(cces(al)) + " unreachable");
    return it->second;
  }

  // Strictly decreasing thresholds as AL grows.
  bool strictly_decreasing() const {
    if (!complete()) return false;
    for (std::size_t i = 1; i < kAllAls.size(); ++i)
      if (!(threshold(kAllAls[i]) < threshold(kAllAls[i - 1]))) return false;
    return true;
  }
};

// Smallest SINR where the regularized curve meets the target, interpolated
// log-linearly in BLER between the bracketing grid points.
inline std::optional<double> curve_threshold(const link::BlerCurve& curve, double target) {
  if (curve.points.empty()) return std::nullopt;
  auto pts = curve.points;
  std::sort(pts.begin(), pts.end(), [](const auto& a, const auto& b) { return a.sinr_db < b.sinr_db; });
  std::vector<double> raw, weights;
  for (const auto& p : pts) {
    raw.push_back(p.bler);
    weights.push_back(std::max(1, p.trials));
  }
  const auto bler = isotonic_non_increasing(raw, weights);
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (bler[i] <= target) {
      if (i == 0) return pts[0].sinr_db;
      const double b0 = bler[i - 1];
      const double b1 = std::max(bler[i], 1e-12);
      const double f = (std::log(b0) - std::log(target)) / (std::log(b0) - std::log(b1));
      return pts[i - 1].sinr_db + f * (pts[i].sinr_db - pts[i - 1].sinr_db);
    }
  }
  return std::nullopt;
}

inline AlThresholdTable build_threshold_table(std::span<const link::BlerCurve> curves, double target = 0.01,
                                              std::string source = {}) {
  if (!(target > 0) || target > 1) throw Error("build_threshold_table: target must lie in (0, 1]");
  AlThresholdTable t;
  t.target = target;
  t.source = std::move(source);
  for (const auto& c : curves)
    if (auto th = curve_threshold(c, target)) t.thresholds_db[c.al] = *th;
  return t;
}

// Minimum AL whose threshold is met (inclusive); nullopt = outage.
inline AlOrOutage sinr_to_al(double sinr_db, const AlThresholdTable& table) {
  for (auto al : kAllAls) {
    const auto it = table.thresholds_db.find(al);
    if (it != table.thresholds_db.end() && sinr_db >= it->second) return al;
  }
  return std::nullopt;
}

}  // namespace bfpdcch::abstraction
