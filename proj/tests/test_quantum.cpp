#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "oracles.hpp"
#include "qkd/quantum.hpp"
#include "qkd/bell.hpp"

using namespace qkd;

TEST_CASE("polarization angle normalizes into [0, pi)") {
  CHECK(Polarization(0.0).angle() == Catch::Approx(0.0));
  CHECK(Polarization(kPi).angle() == Catch::Approx(0.0).margin(1e-12));
  CHECK(Polarization(kPi / 4 + kPi).angle() == Catch::Approx(kPi / 4));
  CHECK(Polarization(-kPi / 4).angle() == Catch::Approx(3 * kPi / 4));
  CHECK(Polarization(7 * kPi / 2).angle() == Catch::Approx(kPi / 2));
}

TEST_CASE("basis outcome polarizations are the analyzer and its orthogonal") {
  const Basis rect = Basis::rectilinear();
  CHECK(rect.outcome_polarization(0).angle() == Catch::Approx(0.0));
  CHECK(rect.outcome_polarization(1).angle() == Catch::Approx(kPi / 2));
  const Basis diag = Basis::diagonal();
  CHECK(diag.outcome_polarization(0).angle() == Catch::Approx(kPi / 4));
  CHECK(diag.outcome_polarization(1).angle() == Catch::Approx(3 * kPi / 4));
}

TEST_CASE("measure_photon on aligned and orthogonal states is deterministic") {
  RandomStream rng(17);
  for (int i = 0; i < 200; ++i) {
    CHECK(measure_photon(Polarization(0.0), Basis::rectilinear(), rng) == 0);
    CHECK(measure_photon(Polarization(kPi / 2), Basis::rectilinear(), rng) == 1);
  }
}

TEST_CASE("measure_photon at 45 degrees matches the cos^2 oracle") {
  const double p0 = oracle::pol_p0(kPi / 4, 0.0);
  REQUIRE(p0 == Catch::Approx(0.5));
  RandomStream rng(99);
  const int n = 100000;
  int zeros = 0;
  for (int i = 0; i < n; ++i)
    if (measure_photon(Polarization(kPi / 4), Basis::rectilinear(), rng) == 0) ++zeros;
  const double freq = static_cast<double>(zeros) / n;
  CHECK(std::abs(freq - p0) < oracle::binomial_band(p0, n));
}

TEST_CASE("measure_photon consumes exactly one draw") {
  RandomStream a(123), b(123);
  (void)measure_photon(Polarization(kPi / 3), Basis::diagonal(), a);
  (void)b.uniform();
  for (int i = 0; i < 8; ++i) CHECK(a.raw() == b.raw());
}

TEST_CASE("two-qubit state construction rejects unnormalized amplitudes") {
  CHECK_THROWS_AS(TwoQubitState({1.0, 1.0, 0.0, 0.0}), std::invalid_argument);
  CHECK_THROWS_AS(TwoQubitState({0.5, 0.0, 0.0, 0.0}), std::invalid_argument);
  CHECK_NOTHROW(TwoQubitState::singlet());
  CHECK_NOTHROW(TwoQubitState::psi_plus());
}

TEST_CASE("joint distribution is a normalized probability vector") {
  const auto states = {TwoQubitState::singlet(), TwoQubitState::psi_plus(),
                       TwoQubitState::product(0.3, 2.1)};
  RandomStream rng(5);
  for (const TwoQubitState& state : states) {
    for (int i = 0; i < 50; ++i) {
      const MeasurementSetting a(rng.uniform() * 2 * kPi);
      const MeasurementSetting b(rng.uniform() * 2 * kPi);
      const JointDistribution d = exact_joint_distribution(state, a, b);
      CHECK(d.pp >= 0.0);
      CHECK(d.pm >= 0.0);
      CHECK(d.mp >= 0.0);
      CHECK(d.mm >= 0.0);
      CHECK(std::abs(d.total() - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("singlet at equal settings is perfectly anticorrelated") {
  const TwoQubitState singlet = TwoQubitState::singlet();
  for (double angle : {0.0, kPi / 4, 1.0, kPi / 2}) {
    const JointDistribution d =
        exact_joint_distribution(singlet, MeasurementSetting(angle), MeasurementSetting(angle));
    CHECK(d.pp == Catch::Approx(0.0).margin(1e-12));
    CHECK(d.mm == Catch::Approx(0.0).margin(1e-12));
    CHECK(d.pm == Catch::Approx(0.5));
    CHECK(d.mp == Catch::Approx(0.5));
  }
}

TEST_CASE("singlet correlation matches the independent projector oracle") {
  const TwoQubitState singlet = TwoQubitState::singlet();
  // Spin-style encoding: a quarter-turn setting difference.
  const double a = 0.6, b = a - kPi / 4;
  const JointDistribution d =
      exact_joint_distribution(singlet, MeasurementSetting(a), MeasurementSetting(b));
  const double expected = oracle::correlation(oracle::singlet_vec(), a, b);
  CHECK(d.correlation() == Catch::Approx(expected).margin(1e-12));
  CHECK(expected == Catch::Approx(-std::cos(kPi / 4)).margin(1e-12));

  // Cell-by-cell agreement on a grid of settings.
  for (double x : {0.0, 0.4, kPi / 2, 2.9}) {
    for (double y : {kPi / 4, 1.3, 3 * kPi / 4}) {
      const JointDistribution g =
          exact_joint_distribution(singlet, MeasurementSetting(x), MeasurementSetting(y));
      for (int sa : {+1, -1})
        for (int sb : {+1, -1})
          CHECK(g.p(sa, sb) ==
                Catch::Approx(oracle::born_probability(oracle::singlet_vec(), x, sa, y, sb))
                    .margin(1e-12));
    }
  }
}

TEST_CASE("separable product state is deterministic at its own settings") {
  const TwoQubitState state = TwoQubitState::product(0.0, 0.0);
  const JointDistribution d =
      exact_joint_distribution(state, MeasurementSetting(0.0), MeasurementSetting(0.0));
  CHECK(d.pp == Catch::Approx(1.0));
  CHECK(d.pm + d.mp + d.mm == Catch::Approx(0.0).margin(1e-12));
}

TEST_CASE("sample_pair on singlet at equal settings always disagrees") {
  const TwoQubitState singlet = TwoQubitState::singlet();
  RandomStream rng(7);
  for (int i = 0; i < 2000; ++i) {
    const PairOutcome out =
        sample_pair(singlet, MeasurementSetting(1.1), MeasurementSetting(1.1), rng);
    CHECK(out.a == -out.b);
  }
}

TEST_CASE("e91 key settings give perfectly anticorrelated key outcomes") {
  // Matched analyzer orientations: phi_2a = phi_1b = pi/4.
  const TwoQubitState singlet = TwoQubitState::singlet();
  RandomStream rng(11);
  for (int i = 0; i < 2000; ++i) {
    const PairOutcome out =
        sample_pair(singlet, MeasurementSetting(kPi / 4), MeasurementSetting(kPi / 4), rng);
    CHECK(out.a == -out.b);  // usable as key once one side flips
  }
}

TEST_CASE("sampled joint frequencies converge to the exact distribution") {
  const TwoQubitState singlet = TwoQubitState::singlet();
  const MeasurementSetting a(0.9), b(2.2);
  const JointDistribution d = exact_joint_distribution(singlet, a, b);
  const int n = 100000;
  RandomStream rng(14);
  std::array<double, 4> counts{0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    const PairOutcome out = sample_pair(singlet, a, b, rng);
    const int idx = (out.a > 0 ? 0 : 2) + (out.b > 0 ? 0 : 1);
    counts[idx] += 1;
  }
  const std::array<double, 4> probs{d.pp, d.pm, d.mp, d.mm};
  for (int i = 0; i < 4; ++i)
    CHECK(std::abs(counts[i] / n - probs[i]) < oracle::binomial_band(probs[i], n));
}

TEST_CASE("oracle equivalence by chi-square over randomized states and settings") {
  RandomStream gen(2024);
  int cases = 0;
  while (cases < 20) {
    // Random normalized complex state with all four cells non-negligible.
    TwoQubitState::Amplitudes amps;
    double norm2 = 0;
    for (auto& amp : amps) {
      amp = {gen.uniform() * 2 - 1, gen.uniform() * 2 - 1};
      norm2 += std::norm(amp);
    }
    for (auto& amp : amps) amp /= std::sqrt(norm2);
    const TwoQubitState state(amps);
    const MeasurementSetting a(gen.uniform() * 2 * kPi), b(gen.uniform() * 2 * kPi);
    const JointDistribution d = exact_joint_distribution(state, a, b);
    if (std::min(std::min(d.pp, d.pm), std::min(d.mp, d.mm)) < 0.02) continue;
    ++cases;

    const int n = 100000;
    RandomStream rng(500 + cases);
    std::vector<double> counts(4, 0);
    for (int i = 0; i < n; ++i) {
      const PairOutcome out = sample_pair(state, a, b, rng);
      counts[(out.a > 0 ? 0 : 2) + (out.b > 0 ? 0 : 1)] += 1;
    }
    const oracle::ChiSquare chi =
        oracle::chi_square(counts, {d.pp, d.pm, d.mp, d.mm}, n);
    INFO("case " << cases << " chi2 = " << chi.statistic << " dof = " << chi.dof);
    CHECK(chi.statistic < oracle::chi_square_critical_001(chi.dof));
  }
}

TEST_CASE("exact marginals are independent of the remote setting") {
  RandomStream gen(31);
  for (int trial = 0; trial < 40; ++trial) {
    TwoQubitState::Amplitudes amps;
    double norm2 = 0;
    for (auto& amp : amps) {
      amp = {gen.uniform() * 2 - 1, gen.uniform() * 2 - 1};
      norm2 += std::norm(amp);
    }
    for (auto& amp : amps) amp /= std::sqrt(norm2);
    const TwoQubitState state(amps);
    const MeasurementSetting a(gen.uniform() * 2 * kPi);
    const MeasurementSetting b1(gen.uniform() * 2 * kPi), b2(gen.uniform() * 2 * kPi);
    const JointDistribution d1 = exact_joint_distribution(state, a, b1);
    const JointDistribution d2 = exact_joint_distribution(state, a, b2);
    CHECK(std::abs(d1.marginal_a_plus() - d2.marginal_a_plus()) < 1e-12);
  }
}

TEST_CASE("randomized search never exceeds the quantum CHSH ceiling") {
  RandomStream gen(77);
  double best = 0;
  for (int trial = 0; trial < 300; ++trial) {
    TwoQubitState::Amplitudes amps;
    double norm2 = 0;
    for (auto& amp : amps) {
      amp = {gen.uniform() * 2 - 1, gen.uniform() * 2 - 1};
      norm2 += std::norm(amp);
    }
    for (auto& amp : amps) amp /= std::sqrt(norm2);
    const TwoQubitState state(amps);
    const double a = gen.uniform() * 2 * kPi, a2 = gen.uniform() * 2 * kPi;
    const double b = gen.uniform() * 2 * kPi, b2 = gen.uniform() * 2 * kPi;
    auto corr = [&](double p, double q) {
      return exact_joint_distribution(state, MeasurementSetting(p), MeasurementSetting(q))
          .correlation();
    };
    const double s = chsh_value(corr(a, b), corr(a, b2), corr(a2, b), corr(a2, b2));
    best = std::max(best, std::abs(s));
    CHECK(std::abs(s) <= 2 * std::sqrt(2.0) + 1e-9);
  }
  // The singlet at the right settings does reach the ceiling.
  const TwoQubitState singlet = TwoQubitState::singlet();
  auto corr = [&](double p, double q) {
    return exact_joint_distribution(singlet, MeasurementSetting(p), MeasurementSetting(q))
        .correlation();
  };
  const double s = chsh_value(corr(kPi / 2, kPi / 4), corr(kPi / 2, 3 * kPi / 4),
                              corr(0.0, kPi / 4), corr(0.0, 3 * kPi / 4));
  CHECK(std::abs(s) == Catch::Approx(2 * std::sqrt(2.0)).margin(1e-9));
}

TEST_CASE("identical seeds give identical outcome sequences") {
  const TwoQubitState singlet = TwoQubitState::singlet();
  RandomStream r1(42), r2(42);
  for (int i = 0; i < 500; ++i) {
    const PairOutcome o1 =
        sample_pair(singlet, MeasurementSetting(0.3), MeasurementSetting(1.2), r1);
    const PairOutcome o2 =
        sample_pair(singlet, MeasurementSetting(0.3), MeasurementSetting(1.2), r2);
    CHECK(o1.a == o2.a);
    CHECK(o1.b == o2.b);
  }
}
