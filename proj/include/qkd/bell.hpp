#pragma once

#include <cmath>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

namespace qkd {

/// Outcome counts for one setting pair. Weights are doubles so exact-oracle
/// probabilities can be tallied directly alongside sampled unit counts.
struct OutcomeCounts {
  double pp = 0, pm = 0, mp = 0, mm = 0;

  double total() const { return pp + pm + mp + mm; }

  void add(int sa, int sb, double weight = 1.0) {
    if (sa > 0)
      (sb > 0 ? pp : pm) += weight;
    else
      (sb > 0 ? mp : mm) += weight;
  }

  OutcomeCounts& operator+=(const OutcomeCounts& other) {
    pp += other.pp;
    pm += other.pm;
    mp += other.mp;
    mm += other.mm;
    return *this;
  }
};

/// Counts N(s_a, s_b) per setting pair (p, q); mergeable component-wise so
/// parallel accumulators can be combined.
class CorrelationTally {
 public:
  using Key = std::pair<double, double>;

  void add(double p, double q, int sa, int sb, double weight = 1.0) {
    counts_[{p, q}].add(sa, sb, weight);
  }

  const OutcomeCounts& at(double p, double q) const {
    auto it = counts_.find({p, q});
    if (it == counts_.end() || it->second.total() <= 0)
      throw std::invalid_argument("no counts tallied for requested setting pair");
    return it->second;
  }

  bool has(double p, double q) const {
    auto it = counts_.find({p, q});
    return it != counts_.end() && it->second.total() > 0;
  }

  const std::map<Key, OutcomeCounts>& all() const { return counts_; }

  CorrelationTally& operator+=(const CorrelationTally& other) {
    for (const auto& [key, counts] : other.counts_) counts_[key] += counts;
    return *this;
  }

 private:
  std::map<Key, OutcomeCounts> counts_;
};

/// E(p, q) = (n++ + n-- - n+- - n-+) / total.
inline double estimate_correlation(const CorrelationTally& tally, double p, double q) {
  const OutcomeCounts& c = tally.at(p, q);
  return (c.pp + c.mm - c.pm - c.mp) / c.total();
}

/// Standard error of the correlation estimate for a setting pair.
inline double correlation_stderr(const CorrelationTally& tally, double p, double q) {
  const OutcomeCounts& c = tally.at(p, q);
  const double e = estimate_correlation(tally, p, q);
  return std::sqrt(std::max(0.0, 1.0 - e * e) / c.total());
}

/// S = E(a,b) + E(a,b') + E(a',b) - E(a',b'). Local deterministic models obey
/// |S| <= 2; quantum correlations reach 2*sqrt(2).
inline double chsh_value(double e_ab, double e_ab2, double e_a2b, double e_a2b2) {
  for (double e : {e_ab, e_ab2, e_a2b, e_a2b2})
    if (!(e >= -1.0 - 1e-9 && e <= 1.0 + 1e-9))
      throw std::invalid_argument("correlation outside [-1, 1]");
  return e_ab + e_ab2 + e_a2b - e_a2b2;
}

/// S = P(a=b|1,1) + P(a=b|1,2) + P(a=b|2,1) - P(a!=b|2,2); security requires
/// S > 2.
inline double agm06_s(double p_eq_11, double p_eq_12, double p_eq_21,
                      double p_neq_22) {
  for (double p : {p_eq_11, p_eq_12, p_eq_21, p_neq_22})
    if (!(p >= 0.0 && p <= 1.0))
      throw std::invalid_argument("probability outside [0, 1]");
  return p_eq_11 + p_eq_12 + p_eq_21 - p_neq_22;
}

/// Maximum over shared settings of the difference between one side's outcome
/// marginal under different remote settings. Quantum marginals are
/// setting-independent, so exact-oracle tallies give ~0; sampled tallies are
/// judged against binomial bands by the caller.
inline double no_signalling_deviation(const CorrelationTally& tally) {
  bool comparable = false;
  double worst = 0.0;

  // Alice's marginal across Bob's settings.
  std::map<double, std::vector<double>> alice_marginals;
  // Bob's marginal across Alice's settings.
  std::map<double, std::vector<double>> bob_marginals;

  for (const auto& [key, counts] : tally.all()) {
    if (counts.total() <= 0) continue;
    alice_marginals[key.first].push_back((counts.pp + counts.pm) / counts.total());
    bob_marginals[key.second].push_back((counts.pp + counts.mp) / counts.total());
  }
  for (const auto* side : {&alice_marginals, &bob_marginals}) {
    for (const auto& [setting, marginals] : *side) {
      if (marginals.size() < 2) continue;
      comparable = true;
      for (std::size_t i = 0; i < marginals.size(); ++i)
        for (std::size_t j = i + 1; j < marginals.size(); ++j)
          worst = std::max(worst, std::abs(marginals[i] - marginals[j]));
    }
  }
  if (!comparable)
    throw std::invalid_argument(
        "no_signalling_deviation: need two setting pairs sharing one side's setting");
  return worst;
}

}  // namespace qkd
