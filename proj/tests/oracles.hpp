// Test-side oracles, written independently of the library implementation:
// direct projector arithmetic on explicit 4-vectors, brute-force enumeration
// of protocol cases, and the statistical helpers the assertions need.
#pragma once

#include <array>
#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

namespace oracle {

inline constexpr double pi = std::numbers::pi;

// --------------------------------------------------------------------------
// Born-rule arithmetic from scratch (kept separate from qkd::).
// --------------------------------------------------------------------------

using Vec2 = std::array<std::complex<double>, 2>;
using Vec4 = std::array<std::complex<double>, 4>;

inline Vec2 bloch_eigvec(double angle, int s) {
  const double half = angle / 2;
  if (s > 0) return {std::cos(half), std::sin(half)};
  return {-std::sin(half), std::cos(half)};
}

inline Vec4 tensor(const Vec2& a, const Vec2& b) {
  return {a[0] * b[0], a[0] * b[1], a[1] * b[0], a[1] * b[1]};
}

inline double born_probability(const Vec4& state, double angle_a, int sa, double angle_b,
                               int sb) {
  const Vec4 proj = tensor(bloch_eigvec(angle_a, sa), bloch_eigvec(angle_b, sb));
  std::complex<double> overlap = 0;
  for (int i = 0; i < 4; ++i) overlap += std::conj(proj[i]) * state[i];
  return std::norm(overlap);
}

inline double correlation(const Vec4& state, double angle_a, double angle_b) {
  double e = 0;
  for (int sa : {+1, -1})
    for (int sb : {+1, -1})
      e += sa * sb * born_probability(state, angle_a, sa, angle_b, sb);
  return e;
}

inline Vec4 singlet_vec() {
  const double s = 1.0 / std::sqrt(2.0);
  return {0.0, s, -s, 0.0};
}

/// Polarization-measurement probability of reading bit 0.
inline double pol_p0(double pol_angle, double analyzer_angle) {
  const double c = std::cos(pol_angle - analyzer_angle);
  return c * c;
}

// --------------------------------------------------------------------------
// Brute-force protocol enumerations.
// --------------------------------------------------------------------------

/// Expected BB84 sifted QBER under intercept-resend, enumerating Alice's
/// basis, Eve's basis, Eve's outcome and Bob's outcome with exact
/// polarization arithmetic (Bob measuring in Alice's basis, as sifting
/// requires).
inline double bb84_intercept_resend_qber() {
  const std::array<double, 2> bases = {0.0, pi / 4};
  double error = 0;
  double weight_total = 0;
  for (double alice_basis : bases) {
    for (int alice_bit : {0, 1}) {
      const double alice_pol = alice_basis + alice_bit * pi / 2;
      for (double eve_basis : bases) {
        for (int eve_bit : {0, 1}) {
          const double p_eve = eve_bit == 0 ? pol_p0(alice_pol, eve_basis)
                                            : 1 - pol_p0(alice_pol, eve_basis);
          const double eve_pol = eve_basis + eve_bit * pi / 2;
          const double p_bob_wrong = alice_bit == 0
                                         ? 1 - pol_p0(eve_pol, alice_basis)
                                         : pol_p0(eve_pol, alice_basis);
          const double w = 0.25 * 0.25 * p_eve;  // uniform bases/bits
          error += w * p_bob_wrong;
          weight_total += w;
        }
      }
    }
  }
  return error / weight_total;
}

/// Independent SARG04 sifting discriminator: given Bob's projected
/// polarization and the two announced candidate polarizations, returns
/// which candidate is excluded (-1 if neither).
inline int sarg04_excluded_candidate(double projected, double cand0, double cand1) {
  auto orthogonal = [](double x, double y) {
    const double d = std::fmod(std::fabs(x - y), pi);
    return std::fabs(d - pi / 2) < 1e-9;
  };
  if (orthogonal(projected, cand0)) return 0;
  if (orthogonal(projected, cand1)) return 1;
  return -1;
}

/// Exact Helstrom success probability for discriminating two equiprobable
/// pure states with overlap |<psi0|psi1>|.
inline double helstrom_success(double overlap_magnitude) {
  return 0.5 * (1.0 + std::sqrt(1.0 - overlap_magnitude * overlap_magnitude));
}

/// CHSH S for the post-intercept-resend pair channel: Eve measures both
/// singlet qubits along a common angle theta (uniform over her set) and
/// resends product eigenstates; exact expectation by enumeration.
inline double intercept_resend_pair_correlation(const std::vector<double>& eve_angles,
                                                double a, double b) {
  const Vec4 singlet = singlet_vec();
  double e = 0;
  for (double theta : eve_angles) {
    for (int sa : {+1, -1}) {
      for (int sb : {+1, -1}) {
        const double p = born_probability(singlet, theta, sa, theta, sb);
        // Alice's expectation measuring angle a on the eigenstate (theta, sa):
        // <A(a)> = sa * cos(a - theta); same for Bob.
        e += p * (sa * std::cos(a - theta)) * (sb * std::cos(b - theta)) /
             static_cast<double>(eve_angles.size());
      }
    }
  }
  return e;
}

// --------------------------------------------------------------------------
// Statistical helpers.
// --------------------------------------------------------------------------

/// Half-width of the 3-sigma binomial band for a frequency estimated from n
/// draws of probability p.
inline double binomial_band(double p, double n) {
  return 3.0 * std::sqrt(std::max(p * (1 - p), 1e-12) / n);
}

/// Pearson chi-square statistic over observed counts vs expected
/// probabilities (cells with expectation < min_expected are pooled).
struct ChiSquare {
  double statistic = 0;
  int dof = 0;
};

inline ChiSquare chi_square(const std::vector<double>& observed,
                            const std::vector<double>& probabilities, double total,
                            double min_expected = 5.0) {
  ChiSquare result;
  double pooled_obs = 0, pooled_exp = 0;
  int cells = 0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    const double expected = probabilities[i] * total;
    if (expected < min_expected) {
      pooled_obs += observed[i];
      pooled_exp += expected;
      continue;
    }
    result.statistic += (observed[i] - expected) * (observed[i] - expected) / expected;
    ++cells;
  }
  if (pooled_exp > 0) {
    result.statistic +=
        (pooled_obs - pooled_exp) * (pooled_obs - pooled_exp) / pooled_exp;
    ++cells;
  }
  result.dof = cells - 1;
  return result;
}

/// Upper critical values of the chi-square distribution at alpha = 0.001.
inline double chi_square_critical_001(int dof) {
  switch (dof) {
    case 1: return 10.828;
    case 2: return 13.816;
    case 3: return 16.266;
    default: return 16.266 + 4.0 * (dof - 3);  // loose upper envelope
  }
}

}  // namespace oracle
