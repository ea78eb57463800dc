#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>

#include "qkd/rng.hpp"

namespace qkd {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kNormTolerance = 1e-12;

namespace detail {

/// Wraps an angle into [0, period).
inline double wrap_angle(double angle, double period) {
  double r = std::fmod(angle, period);
  if (r < 0) r += period;
  // fmod of a tiny negative can land exactly on the period after rounding.
  if (r >= period) r -= period;
  return r;
}

}  // namespace detail

/// Linear polarization of a photon. Direction-free: theta and theta + pi are
/// the same physical polarization, so angles normalize into [0, pi).
class Polarization {
 public:
  explicit Polarization(double angle_radians)
      : angle_(detail::wrap_angle(angle_radians, kPi)) {}

  double angle() const { return angle_; }

  Polarization rotated(double delta) const { return Polarization(angle_ + delta); }

 private:
  double angle_;
};

/// A two-outcome polarization analyzer. The analyzer angle identifies the
/// basis (outcome 0 along the analyzer, outcome 1 along analyzer + pi/2),
/// so it normalizes into [0, pi/2).
class Basis {
 public:
  Basis(double analyzer_angle, std::string label)
      : analyzer_angle_(detail::wrap_angle(analyzer_angle, kPi / 2)),
        label_(std::move(label)) {}

  static Basis rectilinear() { return Basis(0.0, "+"); }
  static Basis diagonal() { return Basis(kPi / 4, "x"); }

  double analyzer_angle() const { return analyzer_angle_; }
  const std::string& label() const { return label_; }

  /// Polarization of the eigenstate for a given outcome bit.
  Polarization outcome_polarization(int bit) const {
    return Polarization(analyzer_angle_ + (bit ? kPi / 2 : 0.0));
  }

  bool operator==(const Basis& other) const {
    return std::abs(analyzer_angle_ - other.analyzer_angle_) < 1e-12;
  }

 private:
  double analyzer_angle_;
  std::string label_;
};

/// A transmitted light pulse. photon_count = 0 is vacuum (no detection
/// possible); all photons in a pulse share one polarization.
struct Pulse {
  unsigned photon_count = 0;
  Polarization polarization{0.0};
  std::size_t slot = 0;

  static Pulse vacuum(std::size_t slot) { return Pulse{0, Polarization(0.0), slot}; }
  bool is_vacuum() const { return photon_count == 0; }
};

/// Measures one pulse's polarization against an analyzer basis.
/// Returns 0 with probability cos^2(pol - analyzer), else 1.
/// Consumes exactly one draw from the stream.
inline int measure_photon(const Polarization& pol, const Basis& basis,
                          RandomStream& rng) {
  const double c = std::cos(pol.angle() - basis.analyzer_angle());
  return rng.bernoulli(c * c) ? 0 : 1;
}

/// Probability that a photon at `pol` yields outcome `bit` in `basis`.
inline double outcome_probability(const Polarization& pol, const Basis& basis,
                                  int bit) {
  const double c = std::cos(pol.angle() - basis.analyzer_angle());
  const double p0 = c * c;
  return bit == 0 ? p0 : 1.0 - p0;
}

/// A two-outcome spin-style measurement direction in the x-z plane,
/// parameterized by its Bloch angle. Outcome +1 projects onto
/// cos(angle/2)|0> + sin(angle/2)|1>, outcome -1 onto the orthogonal vector,
/// so a singlet pair measured at angles (a, b) has E(a, b) = -cos(a - b).
struct MeasurementSetting {
  double angle = 0.0;

  explicit MeasurementSetting(double a) : angle(a) {
    if (!std::isfinite(a)) throw std::invalid_argument("measurement angle must be finite");
  }
};

/// Normalized pure state of two qubits, amplitudes ordered |00>,|01>,|10>,|11>.
class TwoQubitState {
 public:
  using Amplitudes = std::array<std::complex<double>, 4>;

  explicit TwoQubitState(const Amplitudes& amplitudes) : amplitudes_(amplitudes) {
    double norm2 = 0.0;
    for (const auto& a : amplitudes_) norm2 += std::norm(a);
    if (std::abs(norm2 - 1.0) > kNormTolerance)
      throw std::invalid_argument("two-qubit state is not normalized");
  }

  /// (|01> - |10>)/sqrt(2): equal-angle measurements perfectly anticorrelated.
  static TwoQubitState singlet() {
    const double s = 1.0 / std::sqrt(2.0);
    return TwoQubitState({std::complex<double>(0), s, -s, std::complex<double>(0)});
  }

  /// (|01> + |10>)/sqrt(2), kept constructible for comparison runs.
  static TwoQubitState psi_plus() {
    const double s = 1.0 / std::sqrt(2.0);
    return TwoQubitState({std::complex<double>(0), s, s, std::complex<double>(0)});
  }

  /// Product of single-qubit eigenstates pointing along the given Bloch
  /// angles (outcome +1 eigenvectors of the corresponding measurements).
  static TwoQubitState product(double bloch_angle_a, double bloch_angle_b) {
    const double ca = std::cos(bloch_angle_a / 2), sa = std::sin(bloch_angle_a / 2);
    const double cb = std::cos(bloch_angle_b / 2), sb = std::sin(bloch_angle_b / 2);
    return TwoQubitState({ca * cb, ca * sb, sa * cb, sa * sb});
  }

  const Amplitudes& amplitudes() const { return amplitudes_; }

 private:
  Amplitudes amplitudes_;
};

/// Joint outcome probabilities P(s_a, s_b) for s in {+1, -1}.
struct JointDistribution {
  double pp = 0, pm = 0, mp = 0, mm = 0;

  double total() const { return pp + pm + mp + mm; }
  double p(int sa, int sb) const {
    if (sa > 0) return sb > 0 ? pp : pm;
    return sb > 0 ? mp : mm;
  }
  /// Correlation E = P(++) + P(--) - P(+-) - P(-+).
  double correlation() const { return pp + mm - pm - mp; }
  double marginal_a_plus() const { return pp + pm; }
  double marginal_b_plus() const { return pp + mp; }
};

namespace detail {

/// Outcome vector of the Bloch-angle measurement: s = +1 gives
/// (cos(t/2), sin(t/2)), s = -1 the orthogonal complement.
inline std::array<double, 2> outcome_vector(double bloch_angle, int s) {
  const double c = std::cos(bloch_angle / 2), n = std::sin(bloch_angle / 2);
  if (s > 0) return {c, n};
  return {-n, c};
}

inline double joint_probability(const TwoQubitState& state, double angle_a, int sa,
                                double angle_b, int sb) {
  const auto va = outcome_vector(angle_a, sa);
  const auto vb = outcome_vector(angle_b, sb);
  // <v_a (x) v_b | psi> with real outcome vectors.
  const auto& amp = state.amplitudes();
  std::complex<double> overlap =
      va[0] * vb[0] * amp[0] + va[0] * vb[1] * amp[1] +
      va[1] * vb[0] * amp[2] + va[1] * vb[1] * amp[3];
  return std::norm(overlap);
}

}  // namespace detail

/// Exact Born-rule joint distribution of the four +-1 outcome pairs for
/// measurements at settings a (left qubit) and b (right qubit).
inline JointDistribution exact_joint_distribution(const TwoQubitState& state,
                                                  const MeasurementSetting& a,
                                                  const MeasurementSetting& b) {
  JointDistribution d;
  d.pp = detail::joint_probability(state, a.angle, +1, b.angle, +1);
  d.pm = detail::joint_probability(state, a.angle, +1, b.angle, -1);
  d.mp = detail::joint_probability(state, a.angle, -1, b.angle, +1);
  d.mm = detail::joint_probability(state, a.angle, -1, b.angle, -1);
  return d;
}

/// Outcome pair of one entangled-pair measurement, each side +-1.
struct PairOutcome {
  int a = +1;
  int b = +1;
};

/// Samples one joint outcome from the exact distribution.
/// Consumes exactly one draw from the stream.
inline PairOutcome sample_pair(const TwoQubitState& state, const MeasurementSetting& a,
                               const MeasurementSetting& b, RandomStream& rng) {
  const JointDistribution d = exact_joint_distribution(state, a, b);
  const double u = rng.uniform() * d.total();
  if (u < d.pp) return {+1, +1};
  if (u < d.pp + d.pm) return {+1, -1};
  if (u < d.pp + d.pm + d.mp) return {-1, +1};
  return {-1, -1};
}

}  // namespace qkd
