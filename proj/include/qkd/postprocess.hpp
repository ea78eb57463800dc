#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <numeric>
#include <stdexcept>
#include <vector>

#include "qkd/protocols.hpp"
#include "qkd/rng.hpp"

namespace qkd {

using Key = std::vector<int>;

enum class KeyStage { raw, sifted, reconciled, final_key };

/// Key material moving through the classical pipeline; stage transitions are
/// forward-only and leaked_bits never decreases.
struct KeyMaterial {
  Key bits;
  KeyStage stage = KeyStage::raw;
  std::size_t leaked_bits = 0;

  KeyMaterial advanced(Key new_bits, KeyStage next, std::size_t extra_leak) const {
    if (static_cast<int>(next) < static_cast<int>(stage))
      throw std::invalid_argument("key material stage transitions only forward");
    return KeyMaterial{std::move(new_bits), next, leaked_bits + extra_leak};
  }
};

/// Upper bound on how many bits of the reconciled key Eve may know.
struct EveBound {
  std::size_t t = 0;
};

struct QberEstimate {
  double estimate = 0.0;
  std::size_t sample_size = 0;
  Key remaining_a;
  Key remaining_b;
};

/// Publicly samples a fraction of both keys, compares them bit-wise, removes
/// the disclosed positions and returns the mismatch fraction.
inline QberEstimate estimate_qber(const Key& key_a, const Key& key_b,
                                  double sample_fraction, RandomStream& rng) {
  if (key_a.empty() || key_b.empty())
    throw std::invalid_argument("estimate_qber: empty key");
  if (key_a.size() != key_b.size())
    throw std::invalid_argument("estimate_qber: keys differ in length");
  if (!(sample_fraction > 0.0 && sample_fraction < 1.0))
    throw std::invalid_argument("estimate_qber: sample_fraction must be in (0,1)");

  const std::size_t n = key_a.size();
  const std::size_t sample_size =
      std::max<std::size_t>(1, static_cast<std::size_t>(n * sample_fraction));

  // Partial Fisher-Yates from the shared public stream.
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = 0; i < sample_size; ++i) {
    const std::size_t j = i + rng.uniform_index(n - i);
    std::swap(order[i], order[j]);
  }
  std::vector<bool> sampled(n, false);
  std::size_t mismatches = 0;
  for (std::size_t i = 0; i < sample_size; ++i) {
    sampled[order[i]] = true;
    if (key_a[order[i]] != key_b[order[i]]) ++mismatches;
  }

  QberEstimate result;
  result.sample_size = sample_size;
  result.estimate = static_cast<double>(mismatches) / sample_size;
  for (std::size_t i = 0; i < n; ++i) {
    if (sampled[i]) continue;
    result.remaining_a.push_back(key_a[i]);
    result.remaining_b.push_back(key_b[i]);
  }
  return result;
}

struct ReconcileResult {
  Key corrected_b;
  std::size_t leaked_bits = 0;
};

/// Default pass schedule: first-pass blocks sized to catch isolated errors at
/// the estimated rate, doubling per pass.
inline std::vector<std::size_t> cascade_schedule(double qber_hint, std::size_t n,
                                                 std::size_t passes = 4) {
  const double q = std::max(qber_hint, 0.01);
  std::size_t k = std::max<std::size_t>(2, static_cast<std::size_t>(std::ceil(0.73 / q)));
  k = std::min(k, std::max<std::size_t>(2, n));
  std::vector<std::size_t> schedule;
  for (std::size_t p = 0; p < passes; ++p) {
    schedule.push_back(std::min(k, std::max<std::size_t>(2, n)));
    k *= 2;
  }
  return schedule;
}

/// Interactive block-parity error correction (Cascade with back-tracking):
/// every pass partitions a public shuffle of the positions into blocks,
/// compares block parities and bisects mismatching blocks; a corrected bit
/// re-opens the blocks of earlier passes that contain it. leaked_bits counts
/// every disclosed parity (top-level and bisection).
inline ReconcileResult parity_reconcile(const Key& key_a, const Key& key_b,
                                        const std::vector<std::size_t>& block_schedule,
                                        RandomStream& rng) {
  if (key_a.size() != key_b.size())
    throw std::invalid_argument("parity_reconcile: keys differ in length");
  ReconcileResult result{key_b, 0};
  const std::size_t n = key_a.size();
  if (n == 0 || block_schedule.empty()) return result;
  Key& b = result.corrected_b;

  // diff[i] = key_a[i] ^ b[i]; maintained incrementally as bits get fixed.
  std::vector<int> diff(n);
  for (std::size_t i = 0; i < n; ++i) diff[i] = key_a[i] ^ b[i];

  struct Pass {
    std::vector<std::size_t> positions;  // public shuffle
    std::size_t block_size = 0;
    std::vector<int> block_diff_parity;
    std::vector<std::size_t> block_of;  // original position -> block index
  };
  std::vector<Pass> passes;

  std::deque<std::pair<std::size_t, std::size_t>> pending;  // (pass, block)

  auto block_span = [&](const Pass& pass, std::size_t blk) {
    const std::size_t lo = blk * pass.block_size;
    const std::size_t hi = std::min(lo + pass.block_size, pass.positions.size());
    return std::pair{lo, hi};
  };

  auto flip_bit = [&](std::size_t pos, std::size_t source_pass) {
    b[pos] ^= 1;
    diff[pos] ^= 1;
    for (std::size_t r = 0; r < passes.size(); ++r) {
      const std::size_t blk = passes[r].block_of[pos];
      passes[r].block_diff_parity[blk] ^= 1;
      if (r != source_pass && passes[r].block_diff_parity[blk]) pending.push_back({r, blk});
    }
  };

  // Binary search for one erroneous bit inside an odd block; each half-parity
  // comparison discloses one more parity bit.
  auto bisect = [&](std::size_t pass_idx, std::size_t blk) {
    const Pass& pass = passes[pass_idx];
    auto [lo, hi] = block_span(pass, blk);
    while (hi - lo > 1) {
      const std::size_t mid = lo + (hi - lo + 1) / 2;
      ++result.leaked_bits;
      int half_parity = 0;
      for (std::size_t i = lo; i < mid; ++i) half_parity ^= diff[pass.positions[i]];
      if (half_parity)
        hi = mid;
      else
        lo = mid;
    }
    flip_bit(pass.positions[lo], pass_idx);
  };

  auto drain = [&]() {
    while (!pending.empty()) {
      auto [p, blk] = pending.front();
      pending.pop_front();
      if (passes[p].block_diff_parity[blk]) bisect(p, blk);
    }
  };

  for (std::size_t p = 0; p < block_schedule.size(); ++p) {
    Pass pass;
    pass.block_size = std::max<std::size_t>(1, block_schedule[p]);
    pass.positions.resize(n);
    std::iota(pass.positions.begin(), pass.positions.end(), 0);
    if (p > 0) {
      for (std::size_t i = 0; i + 1 < n; ++i) {
        const std::size_t j = i + rng.uniform_index(n - i);
        std::swap(pass.positions[i], pass.positions[j]);
      }
    }
    const std::size_t nblocks = (n + pass.block_size - 1) / pass.block_size;
    pass.block_diff_parity.assign(nblocks, 0);
    pass.block_of.assign(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t blk = i / pass.block_size;
      pass.block_of[pass.positions[i]] = blk;
      pass.block_diff_parity[blk] ^= diff[pass.positions[i]];
    }
    result.leaked_bits += nblocks;  // one disclosed parity per top-level block
    passes.push_back(std::move(pass));

    const std::size_t this_pass = passes.size() - 1;
    for (std::size_t blk = 0; blk < passes[this_pass].block_diff_parity.size(); ++blk)
      if (passes[this_pass].block_diff_parity[blk]) pending.push_back({this_pass, blk});
    drain();
  }
  return result;
}

/// Parities of explicit position subsets; shared helper for privacy
/// amplification and for worked examples with stated subsets.
inline Key extract_parities(const Key& key, const std::vector<std::vector<std::size_t>>& subsets) {
  Key out;
  out.reserve(subsets.size());
  for (const auto& subset : subsets) {
    int parity = 0;
    for (std::size_t pos : subset) {
      if (pos >= key.size())
        throw std::invalid_argument("extract_parities: position out of range");
      parity ^= key[pos];
    }
    out.push_back(parity);
  }
  return out;
}

/// Draws `count` public random subsets of distinct positions (size = half the
/// key length) from the shared stream.
inline std::vector<std::vector<std::size_t>> draw_parity_subsets(std::size_t key_length,
                                                                 std::size_t count,
                                                                 RandomStream& rng) {
  const std::size_t subset_size = std::max<std::size_t>(1, key_length / 2);
  std::vector<std::vector<std::size_t>> subsets(count);
  std::vector<std::size_t> order(key_length);
  for (auto& subset : subsets) {
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = 0; i < subset_size; ++i) {
      const std::size_t j = i + rng.uniform_index(key_length - i);
      std::swap(order[i], order[j]);
    }
    subset.assign(order.begin(), order.begin() + subset_size);
    std::sort(subset.begin(), subset.end());
  }
  return subsets;
}

/// Compresses a partially leaked key into |key| - t - s nearly-secret bits,
/// each the parity of a public random subset of positions. Both parties
/// obtain identical outputs from identical inputs and stream state.
inline Key privacy_amplify(const Key& key, const EveBound& bound, std::size_t safety_margin,
                           RandomStream& rng) {
  if (key.size() <= bound.t + safety_margin)
    throw std::invalid_argument("privacy_amplify: no extractable key for this bound");
  const std::size_t out_len = key.size() - bound.t - safety_margin;
  return extract_parities(key, draw_parity_subsets(key.size(), out_len, rng));
}

namespace detail {

inline std::uint64_t key_digest(const Key& key) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < key.size(); ++i) {
    h ^= static_cast<std::uint64_t>(key[i] & 1) | (i << 1);
    h *= 1099511628211ULL;
    h = splitmix64(h);
  }
  return splitmix64(h ^ key.size());
}

}  // namespace detail

inline constexpr std::size_t kConfirmDigestBits = 64;

/// Both sides exchange a 64-bit digest of their final key; equal digests
/// confirm the key. Empty keys confirm vacuously.
inline bool confirm_key(const Key& key_a, const Key& key_b) {
  if (key_a.empty() && key_b.empty()) return true;
  return detail::key_digest(key_a) == detail::key_digest(key_b);
}

struct PostprocessParams {
  double sample_fraction = 0.25;
  std::vector<std::size_t> block_schedule;  // empty: sized from the estimate
  double eve_bound_factor = 1.2;
  std::size_t safety_margin = 8;

  void validate() const {
    if (!(sample_fraction > 0.0 && sample_fraction < 1.0))
      throw std::invalid_argument("postprocessing.sample_fraction: must be in (0,1)");
    if (!(eve_bound_factor >= 0.0))
      throw std::invalid_argument("postprocessing.eve_bound_factor: must be >= 0");
  }
};

/// Stages 3-8 over a sifted key pair: public QBER estimate, reconciliation,
/// Eve-bound, privacy amplification, key confirmation.
inline PostprocessSummary run_postprocessing(const Key& sifted_a, const Key& sifted_b,
                                             const PostprocessParams& params,
                                             RandomStream& pub) {
  params.validate();
  PostprocessSummary summary;
  if (sifted_a.empty()) {
    summary.confirmed = confirm_key({}, {});
    return summary;
  }

  const QberEstimate est = estimate_qber(sifted_a, sifted_b, params.sample_fraction, pub);
  summary.estimated_qber = est.estimate;
  summary.sample_bits = est.sample_size;

  const std::vector<std::size_t> schedule =
      params.block_schedule.empty()
          ? cascade_schedule(std::max(est.estimate, 0.01), est.remaining_a.size())
          : params.block_schedule;
  const ReconcileResult rec =
      parity_reconcile(est.remaining_a, est.remaining_b, schedule, pub);
  summary.reconciled_length = est.remaining_a.size();
  summary.reconciliation_ok = rec.corrected_b == est.remaining_a;
  summary.leaked_bits = rec.leaked_bits;

  const std::size_t n_rec = est.remaining_a.size();
  std::size_t t = static_cast<std::size_t>(
      std::ceil(n_rec * params.eve_bound_factor * est.estimate));
  t = std::min(t, n_rec);
  summary.eve_bound = t;
  summary.safety_margin = params.safety_margin;

  if (n_rec > t + params.safety_margin) {
    RandomStream side_a = pub;  // both sides replay the same public subsets
    RandomStream side_b = pub;
    summary.final_key_a = privacy_amplify(est.remaining_a, EveBound{t},
                                          params.safety_margin, side_a);
    summary.final_key_b =
        privacy_amplify(rec.corrected_b, EveBound{t}, params.safety_margin, side_b);
    summary.confirmed = confirm_key(summary.final_key_a, summary.final_key_b);
    summary.leaked_bits += kConfirmDigestBits;
  } else {
    summary.confirmed = false;
  }
  return summary;
}

}  // namespace qkd
