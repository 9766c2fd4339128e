#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "bfpdcch/common.hpp"
#include "bfpdcch/parallel.hpp"
#include "bfpdcch/random.hpp"

// DCI link chain: CRC-16, rate-1/3 tail-biting convolutional code, circular
// buffer rate matching onto AL * 72 bits, Gray QPSK, and the matching receiver.
namespace bfpdcch::link {

using Bits = std::vector<std::uint8_t>;

inline constexpr int kPayloadBits = 31;
inline constexpr int kCrcBits = 16;
inline constexpr int kCodewordInfoBits = kPayloadBits + kCrcBits;  // 47
inline constexpr int kCodedBits = 3 * kCodewordInfoBits;           // 141
inline constexpr int kBitsPerCce = 72;                             // 9 REGs * 4 REs * 2 bits
inline constexpr std::uint32_t kCrcPoly = 0x1021;                  // x^16 + x^12 + x^5 + 1

inline int rate_matched_length(Al al) { return cces(al) * kBitsPerCce; }

// ---- CRC ----------------------------------------------------------------

inline std::uint16_t crc16(std::span<const std::uint8_t> bits) {
  std::uint32_t reg = 0;
  for (auto b : bits) {
    const std::uint32_t fb = ((reg >> 15) & 1u) ^ (b & 1u);
    reg = (reg << 1) & 0xFFFFu;
    if (fb) reg ^= kCrcPoly;
  }
  return static_cast<std::uint16_t>(reg);
}

inline Bits crc_attach(std::span<const std::uint8_t> payload) {
  if (payload.size() != kPayloadBits)
    throw Error("crc_attach: payload must be " + std::to_string(kPayloadBits) + " bits, got " + std::to_string(payload.size()));
  Bits out(payload.begin(), payload.end());
  const auto crc = crc16(payload);
  for (int i = kCrcBits - 1; i >= 0; --i) out.push_back(static_cast<std::uint8_t>((crc >> i) & 1u));
  return out;
}

inline bool crc_check(std::span<const std::uint8_t> word) {
  if (word.size() != kCodewordInfoBits) return false;
  return crc16(word) == 0;
}

// ---- Tail-biting convolutional code --------------------------------------

inline constexpr std::array<std::uint32_t, 3> kGenerators = {0133, 0171, 0165};
inline constexpr int kStates = 64;

// reg bit 6 holds the current input, bits 5..0 the previous six inputs.
inline int parity(std::uint32_t x) { return __builtin_parity(x); }

// Encoder state (previous six inputs, most recent in bit 5) when the register
// is preloaded for tail biting.
inline int tail_biting_initial_state(std::span<const std::uint8_t> bits) {
  const auto K = bits.size();
  int state = 0;
  for (std::size_t i = 1; i <= 6; ++i) state |= (bits[K - i] & 1) << (6 - i);
  return state;
}

// Output is stream-ordered: [d0 (47) | d1 (47) | d2 (47)].
inline Bits tbcc_encode(std::span<const std::uint8_t> bits) {
  if (bits.size() != kCodewordInfoBits)
    throw Error("tbcc_encode: input must be " + std::to_string(kCodewordInfoBits) + " bits");
  const auto K = bits.size();
  Bits out(3 * K);
  std::uint32_t state = static_cast<std::uint32_t>(tail_biting_initial_state(bits));
  for (std::size_t k = 0; k < K; ++k) {
    const std::uint32_t reg = (static_cast<std::uint32_t>(bits[k] & 1) << 6) | state;
    for (std::size_t s = 0; s < 3; ++s) out[s * K + k] = static_cast<std::uint8_t>(parity(reg & kGenerators[s]));
    state = reg >> 1;
  }
  return out;
}

// ---- Rate matching --------------------------------------------------------

// Circular buffer read order: for each output position, the index into the
// stream-ordered 141-bit codeword. Each stream goes through the 32-column
// sub-block permutation before the buffer is formed, so puncturing at AL 1
// removes parity evenly along the trellis.
inline const std::vector<int>& circular_buffer_order() {
  static const std::vector<int> order = [] {
    constexpr std::array<int, 32> perm = {1, 17, 9, 25, 5, 21, 13, 29, 3, 19, 11, 27, 7, 23, 15, 31,
                                          0, 16, 8, 24, 4, 20, 12, 28, 2, 18, 10, 26, 6, 22, 14, 30};
    constexpr int C = 32;
    constexpr int D = kCodewordInfoBits;
    constexpr int R = (D + C - 1) / C;
    constexpr int dummies = R * C - D;
    std::vector<int> out;
    for (int s = 0; s < 3; ++s)
      for (int col = 0; col < C; ++col)
        for (int row = 0; row < R; ++row) {
          const int pos = row * C + perm[static_cast<std::size_t>(col)] - dummies;
          if (pos >= 0) out.push_back(s * D + pos);
        }
    return out;
  }();
  return order;
}

inline Bits rate_match(std::span<const std::uint8_t> coded, Al al) {
  if (coded.size() != kCodedBits) throw Error("rate_match: coded block must be 141 bits");
  const auto& order = circular_buffer_order();
  const int E = rate_matched_length(al);
  Bits out(static_cast<std::size_t>(E));
  for (int k = 0; k < E; ++k) out[static_cast<std::size_t>(k)] = coded[static_cast<std::size_t>(order[static_cast<std::size_t>(k) % order.size()])];
  return out;
}

// Soft combining: repeated positions add, punctured positions stay at zero.
inline std::vector<double> rate_dematch(std::span<const double> llr) {
  const auto& order = circular_buffer_order();
  std::vector<double> out(kCodedBits, 0.0);
  for (std::size_t k = 0; k < llr.size(); ++k) out[static_cast<std::size_t>(order[k % order.size()])] += llr[k];
  return out;
}

// ---- QPSK -------------------------------------------------------------------

inline constexpr double kInvSqrt2 = 0.70710678118654752440;

// Gray map: bit 0 -> +, bit 1 -> -, on I then Q. 00 -> (1 + j)/sqrt(2).
inline CVec qpsk_modulate(std::span<const std::uint8_t> bits) {
  if (bits.size() % 2) throw Error("qpsk_modulate: odd number of bits");
  CVec out(bits.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = {kInvSqrt2 * (1.0 - 2.0 * bits[2 * i]), kInvSqrt2 * (1.0 - 2.0 * bits[2 * i + 1])};
  return out;
}

// LLR = ln P(b=0)/P(b=1) for complex noise variance `noise_var` (per symbol).
inline std::vector<double> qpsk_soft_demod(std::span<const cplx> symbols, double noise_var) {
  if (!(noise_var > 0)) throw Error("qpsk_soft_demod: noise variance must be positive");
  const double scale = 4.0 * kInvSqrt2 / noise_var;
  std::vector<double> llr(2 * symbols.size());
  for (std::size_t i = 0; i < symbols.size(); ++i) {
    llr[2 * i] = scale * symbols[i].real();
    llr[2 * i + 1] = scale * symbols[i].imag();
  }
  return llr;
}

// ---- Viterbi ------------------------------------------------------------------

struct Trellis {
  // Output bits (d0 d1 d2 packed in bits 0..2) for (state, input).
  std::array<std::array<std::uint8_t, 2>, kStates> out{};
};

inline const Trellis& trellis() {
  static const Trellis t = [] {
    Trellis tr;
    for (int s = 0; s < kStates; ++s)
      for (int b = 0; b < 2; ++b) {
        const auto reg = (static_cast<std::uint32_t>(b) << 6) | static_cast<std::uint32_t>(s);
        std::uint8_t o = 0;
        for (int g = 0; g < 3; ++g) o |= static_cast<std::uint8_t>(parity(reg & kGenerators[static_cast<std::size_t>(g)]) << g);
        tr.out[static_cast<std::size_t>(s)][static_cast<std::size_t>(b)] = o;
      }
    return tr;
  }();
  return t;
}

// Wrap-around Viterbi over two passes of the stream-ordered soft codeword
// (141 LLRs). Path metrics carry from the first pass into the second; the
// decision is the traceback of the second pass from its best end state.
inline Bits viterbi_decode(std::span<const double> soft) {
  if (soft.size() != kCodedBits) throw Error("viterbi_decode: expected 141 soft values");
  constexpr int K = kCodewordInfoBits;
  constexpr int T = 2 * K;
  const auto& tr = trellis();
  std::array<double, kStates> metric{};
  std::array<double, kStates> next{};
  std::vector<std::array<std::uint8_t, kStates>> survivor(T);

  for (int t = 0; t < T; ++t) {
    const int k = t % K;
    const double l0 = soft[static_cast<std::size_t>(k)];
    const double l1 = soft[static_cast<std::size_t>(K + k)];
    const double l2 = soft[static_cast<std::size_t>(2 * K + k)];
    std::array<double, 8> branch{};
    for (int o = 0; o < 8; ++o)
      branch[static_cast<std::size_t>(o)] = ((o & 1) ? -l0 : l0) + ((o & 2) ? -l1 : l1) + ((o & 4) ? -l2 : l2);
    for (int ns = 0; ns < kStates; ++ns) {
      const int b = ns >> 5;
      const int p0 = (ns & 0x1F) << 1;
      const int p1 = p0 | 1;
      const double m0 = metric[static_cast<std::size_t>(p0)] + branch[tr.out[static_cast<std::size_t>(p0)][static_cast<std::size_t>(b)]];
      const double m1 = metric[static_cast<std::size_t>(p1)] + branch[tr.out[static_cast<std::size_t>(p1)][static_cast<std::size_t>(b)]];
      const bool take1 = m1 > m0;
      next[static_cast<std::size_t>(ns)] = take1 ? m1 : m0;
      survivor[static_cast<std::size_t>(t)][static_cast<std::size_t>(ns)] = take1 ? 1 : 0;
    }
    // Renormalize to keep metrics bounded over long runs.
    const double top = *std::max_element(next.begin(), next.end());
    for (int s = 0; s < kStates; ++s) metric[static_cast<std::size_t>(s)] = next[static_cast<std::size_t>(s)] - top;
  }

  int state = static_cast<int>(std::max_element(metric.begin(), metric.end()) - metric.begin());
  Bits out(K);
  for (int t = T - 1; t >= K; --t) {
    out[static_cast<std::size_t>(t - K)] = static_cast<std::uint8_t>(state >> 5);
    state = ((state & 0x1F) << 1) | survivor[static_cast<std::size_t>(t)][static_cast<std::size_t>(state)];
  }
  return out;
}

// ---- Monte Carlo BLER --------------------------------------------------------

enum class ChannelKind { kAwgn, kRayleighFlat };

struct LinkChainConfig {
  std::vector<Al> als{kAllAls.begin(), kAllAls.end()};
  ChannelKind channel = ChannelKind::kAwgn;
  int trials = 2000;      // upper bound per SINR point
  int max_errors = 0;     // stop a point early once this many block errors accrue (0: never)
  std::vector<double> sinr_grid_db;
  std::uint64_t seed = 1;
  unsigned threads = 1;

  static std::vector<double> grid(double lo, double hi, double step) {
    std::vector<double> g;
    for (int i = 0; lo + i * step <= hi + 1e-9; ++i) g.push_back(lo + i * step);
    return g;
  }
};

struct BlerPoint {
  double sinr_db;
  double bler;
  int trials;
  int errors;
};

struct BlerCurve {
  Al al = Al::L1;
  std::vector<BlerPoint> points;
};

inline constexpr int kTrialBlock = 64;

// One DCI through the full chain at the given per-symbol noise variance.
inline bool transmit_dci(Rng& rng, Al al, double noise_var, ChannelKind channel) {
  Bits payload(kPayloadBits);
  for (auto& b : payload) b = static_cast<std::uint8_t>(rng() & 1u);
  const auto word = crc_attach(payload);
  const auto tx = qpsk_modulate(rate_match(tbcc_encode(word), al));
  const double sigma = std::sqrt(noise_var / 2.0);
  std::normal_distribution<double> n(0.0, sigma);
  CVec rx(tx.size());
  cplx gain{1.0, 0.0};
  if (channel == ChannelKind::kRayleighFlat) gain = complex_gaussian(rng, 1.0);
  for (std::size_t i = 0; i < tx.size(); ++i) {
    const double re = n(rng);
    const double im = n(rng);
    // Coherent detection with perfect CSI: derotate and fold |g| into the LLR scale.
    rx[i] = std::conj(gain) * (gain * tx[i] + cplx{re, im});
  }
  const auto llr = qpsk_soft_demod(rx, noise_var);
  const auto decoded = viterbi_decode(rate_dematch(llr));
  if (!crc_check(decoded)) return true;
  return !std::equal(payload.begin(), payload.end(), decoded.begin());
}

// BLER per AL over the SINR grid (SINR = Es/N0 of the unit-energy symbols).
inline std::vector<BlerCurve> simulate_bler(const LinkChainConfig& cfg) {
  if (cfg.trials < 1) throw Error("simulate_bler: trials must be >= 1");
  const std::size_t n_points = cfg.sinr_grid_db.size();
  std::vector<BlerCurve> curves;
  for (auto al : cfg.als) curves.push_back({al, std::vector<BlerPoint>(n_points)});

  parallel_for(cfg.als.size() * n_points, cfg.threads, [&](std::size_t task) {
    const std::size_t a = task / n_points;
    const std::size_t p = task % n_points;
    const Al al = cfg.als[a];
    const double sinr_db = cfg.sinr_grid_db[p];
    const double noise_var = db_to_lin(-sinr_db);
    int done = 0;
    int errors = 0;
    for (int block = 0; done < cfg.trials; ++block) {
      auto rng = make_rng(cfg.seed, {static_cast<std::uint64_t>(cces(al)), p, static_cast<std::uint64_t>(block)});
      const int n = std::min(kTrialBlock, cfg.trials - done);
      for (int i = 0; i < n; ++i) errors += transmit_dci(rng, al, noise_var, cfg.channel) ? 1 : 0;
      done += n;
      if (cfg.max_errors > 0 && errors >= cfg.max_errors) break;
    }
    curves[a].points[p] = {sinr_db, static_cast<double>(errors) / done, done, errors};
  });
  return curves;
}

// ---- Channel-estimation error: explicit estimation vs SINR abstraction -------

struct BerPoint {
  double snr_db;
  double ber;
  long long bits;
};

struct BerCurve {
  double alpha;
  std::vector<BerPoint> points;
};

struct AbstractionStudy {
  std::vector<BerCurve> estimation;
  std::vector<BerCurve> abstraction;
};

struct AbstractionConfig {
  std::vector<double> alphas{0.0, 0.001, 0.002, 0.005};
  int interferers = 1;  // other active beams, each leaking alpha
  std::vector<double> snr_grid_db = LinkChainConfig::grid(0.0, 34.0, 1.0);
  int symbols = 200000;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

inline constexpr int kSymbolBlock = 4096;

// Rayleigh flat fading, QPSK, hard decisions. Estimation: the common pilot is
// received through every beam, so the estimate is sum_j h w_j while the data
// sees h w_i plus the other beams' own symbols. Abstraction: ideal channel,
// Gaussian noise of variance sigma^2 + 2 sum_j alpha_j.
inline AbstractionStudy estimation_vs_abstraction(const AbstractionConfig& cfg) {
  for (double a : cfg.alphas)
    if (a < 0) throw Error("estimation_vs_abstraction: negative interference level");
  const std::size_t n_a = cfg.alphas.size();
  const std::size_t n_p = cfg.snr_grid_db.size();
  AbstractionStudy study;
  for (double a : cfg.alphas) {
    study.estimation.push_back({a, std::vector<BerPoint>(n_p)});
    study.abstraction.push_back({a, std::vector<BerPoint>(n_p)});
  }
  const auto hard = [](cplx z, cplx x) {
    return static_cast<int>((z.real() < 0) != (x.real() < 0)) + static_cast<int>((z.imag() < 0) != (x.imag() < 0));
  };
  const auto qpsk = [](Rng& rng) {
    const auto r = rng();
    return cplx{(r & 1u) ? -kInvSqrt2 : kInvSqrt2, (r & 2u) ? -kInvSqrt2 : kInvSqrt2};
  };

  parallel_for(n_a * n_p, cfg.threads, [&](std::size_t task) {
    const std::size_t a = task / n_p;
    const std::size_t p = task % n_p;
    const double alpha = cfg.alphas[a];
    const double noise_var = db_to_lin(-cfg.snr_grid_db[p]);
    const double eff_var = noise_var + 2.0 * alpha * cfg.interferers;
    long long err_est = 0, err_abs = 0, bits = 0;
    for (int done = 0, block = 0; done < cfg.symbols; ++block) {
      auto rng = make_rng(cfg.seed, {a, p, static_cast<std::uint64_t>(block)});
      const int n = std::min(kSymbolBlock, cfg.symbols - done);
      for (int i = 0; i < n; ++i) {
        const cplx h = complex_gaussian(rng, 1.0);
        const cplx x = qpsk(rng);
        cplx pilot_leak{0.0, 0.0};
        cplx data_leak{0.0, 0.0};
        for (int j = 0; j < cfg.interferers; ++j) {
          const cplx hj = complex_gaussian(rng, alpha);
          pilot_leak += hj;
          data_leak += hj * qpsk(rng);
        }
        const cplx noise = complex_gaussian(rng, noise_var);
        const cplx estimate = h + pilot_leak;
        const cplx y = h * x + data_leak + noise;
        err_est += hard(y / estimate, x);
        const cplx y_abs = h * x + complex_gaussian(rng, eff_var);
        err_abs += hard(y_abs / h, x);
        bits += 2;
      }
      done += n;
    }
    const double snr = cfg.snr_grid_db[p];
    study.estimation[a].points[p] = {snr, static_cast<double>(err_est) / bits, bits};
    study.abstraction[a].points[p] = {snr, static_cast<double>(err_abs) / bits, bits};
  });
  return study;
}

// SNR (dB) where a BER curve first falls to `target`, log-linear in BER
// between grid points. nullopt if it never does.
inline std::optional<double> crossing_db(const std::vector<BerPoint>& pts, double target) {
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].ber <= target) {
      if (i == 0) return pts[0].snr_db;
      const double b0 = std::max(pts[i - 1].ber, 1e-300);
      const double b1 = std::max(pts[i].ber, 1e-300);
      const double f = b0 == b1 ? 0.0 : (std::log(b0) - std::log(target)) / (std::log(b0) - std::log(b1));
      return pts[i - 1].snr_db + f * (pts[i].snr_db - pts[i - 1].snr_db);
    }
  }
  return std::nullopt;
}

}  // namespace bfpdcch::link
