#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "qkd/bell.hpp"
#include "qkd/channel.hpp"
#include "qkd/quantum.hpp"
#include "qkd/rng.hpp"

namespace qkd {

enum class Protocol { bb84, sarg04, e91, agm06 };

inline const char* protocol_name(Protocol p) {
  switch (p) {
    case Protocol::bb84: return "bb84";
    case Protocol::sarg04: return "sarg04";
    case Protocol::e91: return "e91";
    case Protocol::agm06: return "agm06";
  }
  return "?";
}

// ---------------------------------------------------------------------------
// SARG04 domain types
// ---------------------------------------------------------------------------

/// The four SARG04 signal states. |+-x> (diagonal family) code for 0,
/// |+-z> (rectilinear family) code for 1.
enum class Sarg04State { plus_x, minus_x, plus_z, minus_z };

inline double sarg04_angle(Sarg04State s) {
  switch (s) {
    case Sarg04State::plus_x: return kPi / 4;
    case Sarg04State::minus_x: return 3 * kPi / 4;
    case Sarg04State::plus_z: return 0.0;
    case Sarg04State::minus_z: return kPi / 2;
  }
  return 0.0;
}

inline bool sarg04_is_x_family(Sarg04State s) {
  return s == Sarg04State::plus_x || s == Sarg04State::minus_x;
}

inline int sarg04_bit(Sarg04State s) { return sarg04_is_x_family(s) ? 0 : 1; }

inline const char* sarg04_name(Sarg04State s) {
  switch (s) {
    case Sarg04State::plus_x: return "+x";
    case Sarg04State::minus_x: return "-x";
    case Sarg04State::plus_z: return "+z";
    case Sarg04State::minus_z: return "-z";
  }
  return "?";
}

/// The announced unordered pair {|wx>, |w'z>}: exactly one member from each
/// family, one of them being Alice's actual state.
class Sarg04Announcement {
 public:
  Sarg04Announcement(Sarg04State first, Sarg04State second) {
    if (sarg04_is_x_family(first) == sarg04_is_x_family(second))
      throw std::invalid_argument(
          "SARG04 announcement needs one x-family and one z-family state");
    x_member_ = sarg04_is_x_family(first) ? first : second;
    z_member_ = sarg04_is_x_family(first) ? second : first;
  }

  Sarg04State x_member() const { return x_member_; }
  Sarg04State z_member() const { return z_member_; }
  bool contains(Sarg04State s) const { return s == x_member_ || s == z_member_; }

 private:
  Sarg04State x_member_;
  Sarg04State z_member_;
};

struct Sarg04Decode {
  bool conclusive = false;
  int bit = 0;
};

/// Bob's sifting rule: his outcome projects onto a definite polarization; if
/// that polarization is orthogonal to one announced state, that state is
/// impossible, so Alice certainly sent the other one.
inline Sarg04Decode sarg04_conclusive(const Basis& bob_basis, int bob_outcome,
                                      const Sarg04Announcement& announcement) {
  const double projected = bob_basis.outcome_polarization(bob_outcome).angle();
  auto orthogonal = [&](Sarg04State s) {
    const double d = std::abs(detail::wrap_angle(projected - sarg04_angle(s), kPi));
    return std::abs(d - kPi / 2) < 1e-9;
  };
  if (orthogonal(announcement.x_member()))
    return {true, sarg04_bit(announcement.z_member())};
  if (orthogonal(announcement.z_member()))
    return {true, sarg04_bit(announcement.x_member())};
  return {false, 0};
}

// ---------------------------------------------------------------------------
// Entangled-protocol settings
// ---------------------------------------------------------------------------

/// Analyzer orientations for E91 (Bloch angles). Equal-angle coincidences
/// feed the key; the cross combinations (a, a') x (b, b') feed the CHSH
/// estimate. With a singlet source the documented assignment gives
/// S = -2*sqrt(2).
struct E91Settings {
  std::vector<double> alice_angles{0.0, kPi / 4, kPi / 2};
  std::vector<double> bob_angles{kPi / 4, kPi / 2, 3 * kPi / 4};
  double a = kPi / 2;
  double a_prime = 0.0;
  double b = kPi / 4;
  double b_prime = 3 * kPi / 4;
  /// Fraction of check-eligible slots actually tallied, drawn by public coins.
  double check_fraction = 0.5;

  void validate() const {
    if (alice_angles.empty() || bob_angles.empty())
      throw std::invalid_argument("e91: empty setting list");
    if (!(check_fraction > 0.0 && check_fraction <= 1.0))
      throw std::invalid_argument("e91.check_fraction: must be in (0,1]");
  }
};

/// AGM06 measurement directions (Bloch angles). A0 = B1 supplies the key
/// (Bob's key outcome is negated by convention, as for E91, so a singlet
/// gives Q = 0). {A1, A2} x {B1, B2} use pi/4 spacing, which maximizes the
/// implemented S statistic for a singlet at 1 + (3cos(pi/8) + sin(pi/8))/2
/// = 2.577; pi/2 spacing caps that statistic at exactly 2 for every quantum
/// state, so it cannot certify anything.
struct Agm06Settings {
  double a0 = 7 * kPi / 8;
  double a1 = 0.0;
  double a2 = kPi / 4;
  double b1 = 7 * kPi / 8;
  double b2 = 9 * kPi / 8;
};

// ---------------------------------------------------------------------------
// Session transcript
// ---------------------------------------------------------------------------

/// One prepare-and-measure slot, everything the simulator knows about it.
struct PulseSlot {
  std::size_t slot = 0;
  int alice_bit = 0;
  char alice_basis = '+';  // '+' rectilinear, 'x' diagonal
  double alice_pol_angle = 0.0;
  std::optional<Sarg04State> alice_state;
  std::optional<Sarg04Announcement> announcement;
  std::optional<double> eve_basis_angle;
  std::optional<int> eve_bit;
  bool eve_stored = false;
  char bob_basis = '+';
  bool detected = false;
  int bob_outcome = 0;
  bool forced_error = false;  // replay bookkeeping
};

enum class PairPhase { key, check, discarded };

/// One entangled-pair slot.
struct PairSlot {
  std::size_t slot = 0;
  int alice_setting = 0;  // index into alice_setting_angles
  int bob_setting = 0;    // index into bob_setting_angles
  int outcome_a = +1;
  int outcome_b = +1;
  PairPhase phase = PairPhase::discarded;
};

struct SessionStats {
  std::size_t n_slots = 0;
  std::size_t detected = 0;
  std::size_t sifted = 0;
  double sift_fraction = 0.0;
  double sifted_qber = 0.0;
  /// 1 - (correct sifted bits)/n_slots: counts non-detections, basis
  /// mismatches / inconclusive slots, and erroneous sifted bits alike.
  double aggregate_error_rate = 0.0;
  std::optional<double> chsh_s;
  std::optional<double> chsh_stderr;
  std::optional<double> agm06_q;
  std::optional<double> agm06_s_value;
  std::optional<double> agm06_s_stderr;
  std::optional<double> eve_agreement;
};

/// Classical post-processing results attached to a session once stages 3-8
/// have run.
struct PostprocessSummary {
  double estimated_qber = 0.0;
  std::size_t sample_bits = 0;
  std::size_t reconciled_length = 0;
  bool reconciliation_ok = false;
  std::size_t eve_bound = 0;
  std::size_t safety_margin = 0;
  std::size_t leaked_bits = 0;
  std::vector<int> final_key_a;
  std::vector<int> final_key_b;
  bool confirmed = false;
};

/// Full transcript of one protocol run. Reported statistics are
/// recomputable from the per-slot data alone (see recompute_statistics).
struct SessionRecord {
  Protocol protocol = Protocol::bb84;
  std::uint64_t seed = 0;
  std::vector<PulseSlot> pulse_slots;
  std::vector<PairSlot> pair_slots;
  std::vector<double> alice_setting_angles;
  std::vector<double> bob_setting_angles;
  std::array<double, 4> chsh_assignment{0, 0, 0, 0};  // a, a', b, b'
  std::vector<std::size_t> sifted_slots;
  std::vector<int> raw_key_a, raw_key_b;
  std::vector<int> sifted_key_a, sifted_key_b;
  SessionStats stats;
  bool aborted = false;
  std::string abort_reason;
  EveRecord eve_record;
  std::optional<PostprocessSummary> post;
};

enum class Decision { proceed, abort };
enum class ErrorMetric { aggregate, sifted_qber };

/// Abort when the configured error metric strictly exceeds the threshold
/// (a rate exactly at the threshold continues).
inline Decision bb84_decision(const SessionRecord& record, ErrorMetric metric,
                              double threshold) {
  const double rate = metric == ErrorMetric::aggregate
                          ? record.stats.aggregate_error_rate
                          : record.stats.sifted_qber;
  return rate > threshold ? Decision::abort : Decision::proceed;
}

// ---------------------------------------------------------------------------
// Prepare-and-measure protocols
// ---------------------------------------------------------------------------

namespace detail {

inline Basis basis_from_label(char label) {
  return label == 'x' ? Basis::diagonal() : Basis::rectilinear();
}

/// Sifting, key extraction and statistics shared by BB84 and SARG04. The
/// caller supplies the per-slot sift rule (returns Bob's decoded bit for
/// slots that survive sifting).
template <typename SiftRule>
void finish_pulse_session(SessionRecord& record, SiftRule&& sift_rule) {
  auto& stats = record.stats;
  stats.n_slots = record.pulse_slots.size();
  std::size_t correct_sifted = 0;
  std::size_t eve_known = 0, eve_correct = 0;
  for (const PulseSlot& s : record.pulse_slots) {
    if (!s.detected) continue;
    ++stats.detected;
    record.raw_key_a.push_back(s.alice_bit);
    record.raw_key_b.push_back(s.bob_outcome);
    const std::optional<int> decoded = sift_rule(s);
    if (!decoded) continue;
    ++stats.sifted;
    record.sifted_slots.push_back(s.slot);
    record.sifted_key_a.push_back(s.alice_bit);
    record.sifted_key_b.push_back(*decoded);
    if (s.alice_bit == *decoded) ++correct_sifted;
    if (s.eve_bit) {
      ++eve_known;
      if (*s.eve_bit == s.alice_bit) ++eve_correct;
    }
  }
  stats.sift_fraction =
      stats.n_slots ? static_cast<double>(stats.sifted) / stats.n_slots : 0.0;
  std::size_t mismatched = stats.sifted - correct_sifted;
  stats.sifted_qber =
      stats.sifted ? static_cast<double>(mismatched) / stats.sifted : 0.0;
  stats.aggregate_error_rate =
      stats.n_slots
          ? 1.0 - static_cast<double>(correct_sifted) / stats.n_slots
          : 0.0;
  if (eve_known > 0)
    stats.eve_agreement = static_cast<double>(eve_correct) / eve_known;
}

}  // namespace detail

/// BB84: Alice encodes uniform bits in uniform bases, Bob measures in
/// uniform bases, sifting keeps detected slots with matching bases.
inline SessionRecord run_bb84(std::size_t n_slots, const ChannelConfig& channel,
                              const AdversaryConfig& adversary, std::uint64_t seed) {
  if (n_slots < 1) throw std::invalid_argument("run_bb84: n_slots must be >= 1");
  channel.validate();
  adversary.validate();

  RandomStream alice = make_stream(seed, "alice");
  RandomStream bob_bases = make_stream(seed, "bob-bases");
  RandomStream bob_meas = make_stream(seed, "bob-measure");
  RandomStream source = make_stream(seed, "source");
  RandomStream chan = make_stream(seed, "channel");
  RandomStream eve = make_stream(seed, "eve");

  SessionRecord record;
  record.protocol = Protocol::bb84;
  record.seed = seed;
  record.pulse_slots.reserve(n_slots);

  for (std::size_t slot = 0; slot < n_slots; ++slot) {
    PulseSlot ps;
    ps.slot = slot;
    ps.alice_bit = alice.uniform_bit();
    ps.alice_basis = alice.uniform_bit() ? 'x' : '+';
    const Basis prep = detail::basis_from_label(ps.alice_basis);
    const Polarization pol = prep.outcome_polarization(ps.alice_bit);
    ps.alice_pol_angle = pol.angle();

    Pulse pulse = emit_pulse(channel, pol, slot, source);
    pulse = eve_apply(pulse, adversary, record.eve_record, eve);
    if (!record.eve_record.empty() &&
        record.eve_record.entries().back().slot == slot) {
      const EveSlotRecord& entry = record.eve_record.entries().back();
      if (entry.measured_basis) {
        ps.eve_basis_angle = entry.measured_basis->analyzer_angle();
        ps.eve_bit = entry.measured_bit;
      }
      ps.eve_stored = entry.stored_photons > 0;
    }
    pulse = transmit(pulse, channel, chan);

    ps.bob_basis = bob_bases.uniform_bit() ? 'x' : '+';
    if (!pulse.is_vacuum()) {
      ps.detected = true;
      ps.bob_outcome =
          measure_photon(pulse.polarization, detail::basis_from_label(ps.bob_basis),
                         bob_meas);
    }
    record.pulse_slots.push_back(ps);
  }

  // Deferred PNS measurement: once bases are public Eve measures each stored
  // photon in Alice's announced basis and learns the bit exactly.
  if (adversary.strategy == EveStrategy::pns) {
    auto entry_it = record.eve_record.entries().begin();
    for (PulseSlot& ps : record.pulse_slots) {
      while (entry_it != record.eve_record.entries().end() && entry_it->slot < ps.slot)
        ++entry_it;
      if (entry_it == record.eve_record.entries().end()) break;
      if (entry_it->slot != ps.slot || entry_it->stored_photons == 0) continue;
      ps.eve_bit = eve_infer_announced_basis(
          *entry_it, detail::basis_from_label(ps.alice_basis), eve);
    }
  }

  detail::finish_pulse_session(record, [](const PulseSlot& s) -> std::optional<int> {
    if (s.alice_basis != s.bob_basis) return std::nullopt;
    return s.bob_outcome;
  });
  return record;
}

/// SARG04: the BB84 states with state-pair announcements instead of basis
/// announcements; sifting keeps Bob's conclusive slots.
inline SessionRecord run_sarg04(std::size_t n_slots, const ChannelConfig& channel,
                                const AdversaryConfig& adversary, std::uint64_t seed) {
  if (n_slots < 1) throw std::invalid_argument("run_sarg04: n_slots must be >= 1");
  channel.validate();
  adversary.validate();

  RandomStream alice = make_stream(seed, "alice");
  RandomStream bob_bases = make_stream(seed, "bob-bases");
  RandomStream bob_meas = make_stream(seed, "bob-measure");
  RandomStream source = make_stream(seed, "source");
  RandomStream chan = make_stream(seed, "channel");
  RandomStream eve = make_stream(seed, "eve");

  SessionRecord record;
  record.protocol = Protocol::sarg04;
  record.seed = seed;
  record.pulse_slots.reserve(n_slots);

  for (std::size_t slot = 0; slot < n_slots; ++slot) {
    PulseSlot ps;
    ps.slot = slot;
    ps.alice_bit = alice.uniform_bit();
    const int sign = alice.uniform_bit();
    Sarg04State state;
    if (ps.alice_bit == 0)
      state = sign ? Sarg04State::minus_x : Sarg04State::plus_x;
    else
      state = sign ? Sarg04State::minus_z : Sarg04State::plus_z;
    ps.alice_state = state;
    ps.alice_basis = sarg04_is_x_family(state) ? 'x' : '+';
    ps.alice_pol_angle = sarg04_angle(state);

    // Partner drawn uniformly between the two states of the other family.
    const int partner_sign = alice.uniform_bit();
    Sarg04State partner;
    if (sarg04_is_x_family(state))
      partner = partner_sign ? Sarg04State::minus_z : Sarg04State::plus_z;
    else
      partner = partner_sign ? Sarg04State::minus_x : Sarg04State::plus_x;
    ps.announcement = Sarg04Announcement(state, partner);

    Pulse pulse = emit_pulse(channel, Polarization(ps.alice_pol_angle), slot, source);
    pulse = eve_apply(pulse, adversary, record.eve_record, eve);
    if (!record.eve_record.empty() &&
        record.eve_record.entries().back().slot == slot) {
      const EveSlotRecord& entry = record.eve_record.entries().back();
      if (entry.measured_basis) {
        ps.eve_basis_angle = entry.measured_basis->analyzer_angle();
        ps.eve_bit = entry.measured_bit;
      }
      ps.eve_stored = entry.stored_photons > 0;
    }
    pulse = transmit(pulse, channel, chan);

    ps.bob_basis = bob_bases.uniform_bit() ? 'x' : '+';
    if (!pulse.is_vacuum()) {
      ps.detected = true;
      ps.bob_outcome =
          measure_photon(pulse.polarization, detail::basis_from_label(ps.bob_basis),
                         bob_meas);
    }
    record.pulse_slots.push_back(ps);
  }

  // Deferred PNS measurement: Eve discriminates the two announced candidate
  // states on her stored photon (Helstrom-limited for this non-orthogonal
  // pair) and guesses the coded bit.
  if (adversary.strategy == EveStrategy::pns) {
    auto entry_it = record.eve_record.entries().begin();
    for (PulseSlot& ps : record.pulse_slots) {
      while (entry_it != record.eve_record.entries().end() && entry_it->slot < ps.slot)
        ++entry_it;
      if (entry_it == record.eve_record.entries().end()) break;
      if (entry_it->slot != ps.slot || entry_it->stored_photons == 0) continue;
      const Sarg04Announcement& annc = *ps.announcement;
      const Polarization cand0(sarg04_angle(annc.x_member()));
      const Polarization cand1(sarg04_angle(annc.z_member()));
      const int guess = eve_infer_between(*entry_it, cand0, cand1, eve);
      ps.eve_bit =
          guess == 0 ? sarg04_bit(annc.x_member()) : sarg04_bit(annc.z_member());
    }
  }

  detail::finish_pulse_session(record, [](const PulseSlot& s) -> std::optional<int> {
    const Sarg04Decode d = sarg04_conclusive(detail::basis_from_label(s.bob_basis),
                                             s.bob_outcome, *s.announcement);
    if (!d.conclusive) return std::nullopt;
    return d.bit;
  });
  return record;
}

// ---------------------------------------------------------------------------
// Entangled-pair protocols
// ---------------------------------------------------------------------------

namespace detail {

struct BellEstimate {
  double s = 0.0;
  double sigma = 0.0;
};

inline std::optional<BellEstimate> chsh_from_tally(const CorrelationTally& tally,
                                                   const std::array<double, 4>& pq) {
  const auto [a, a2, b, b2] = pq;
  const std::array<std::pair<double, double>, 4> combos = {
      std::pair{a, b}, {a, b2}, {a2, b}, {a2, b2}};
  for (const auto& [p, q] : combos)
    if (!tally.has(p, q)) return std::nullopt;
  BellEstimate est;
  est.s = chsh_value(estimate_correlation(tally, a, b), estimate_correlation(tally, a, b2),
                     estimate_correlation(tally, a2, b),
                     estimate_correlation(tally, a2, b2));
  double var = 0.0;
  for (const auto& [p, q] : combos) {
    const double se = correlation_stderr(tally, p, q);
    var += se * se;
  }
  est.sigma = std::sqrt(var);
  return est;
}

}  // namespace detail

/// E91: both sides draw analyzer orientations per pair; equal-angle slots
/// feed the key (Bob's bit negated by the documented singlet convention),
/// a public-coin subsample of the (a,a') x (b,b') slots feeds the CHSH
/// estimate, and the session aborts unless the inequality is violated by
/// more than 3 sigma.
inline SessionRecord run_e91(std::size_t n_pairs, const TwoQubitState& source_state,
                             const AdversaryConfig& adversary, std::uint64_t seed,
                             const E91Settings& settings = E91Settings{}) {
  if (n_pairs < 1) throw std::invalid_argument("run_e91: n_pairs must be >= 1");
  settings.validate();
  adversary.validate();
  if (adversary.strategy == EveStrategy::pns)
    throw std::invalid_argument("run_e91: pns strategy applies to pulse protocols only");

  RandomStream alice = make_stream(seed, "alice");
  RandomStream bob = make_stream(seed, "bob");
  RandomStream meas = make_stream(seed, "measure");
  RandomStream eve = make_stream(seed, "eve");
  RandomStream pub = make_stream(seed, "public");

  SessionRecord record;
  record.protocol = Protocol::e91;
  record.seed = seed;
  record.alice_setting_angles = settings.alice_angles;
  record.bob_setting_angles = settings.bob_angles;
  record.chsh_assignment = {settings.a, settings.a_prime, settings.b, settings.b_prime};
  record.pair_slots.reserve(n_pairs);

  CorrelationTally tally;
  auto in_pair = [](double angle, double x, double y) {
    return std::abs(angle - x) < 1e-12 || std::abs(angle - y) < 1e-12;
  };

  for (std::size_t slot = 0; slot < n_pairs; ++slot) {
    PairSlot pr;
    pr.slot = slot;
    pr.alice_setting = static_cast<int>(alice.uniform_index(settings.alice_angles.size()));
    pr.bob_setting = static_cast<int>(bob.uniform_index(settings.bob_angles.size()));
    const double angle_a = settings.alice_angles[pr.alice_setting];
    const double angle_b = settings.bob_angles[pr.bob_setting];

    TwoQubitState state = source_state;
    if (adversary.strategy == EveStrategy::intercept_resend)
      state = eve_pair_intercept(state, adversary, eve);

    const PairOutcome out =
        sample_pair(state, MeasurementSetting(angle_a), MeasurementSetting(angle_b), meas);
    pr.outcome_a = out.a;
    pr.outcome_b = out.b;

    if (std::abs(angle_a - angle_b) < 1e-12) {
      pr.phase = PairPhase::key;
    } else if (in_pair(angle_a, settings.a, settings.a_prime) &&
               in_pair(angle_b, settings.b, settings.b_prime) &&
               pub.bernoulli(settings.check_fraction)) {
      pr.phase = PairPhase::check;
      tally.add(angle_a, angle_b, out.a, out.b);
    } else {
      pr.phase = PairPhase::discarded;
    }
    record.pair_slots.push_back(pr);
  }

  std::size_t correct = 0;
  for (const PairSlot& pr : record.pair_slots) {
    if (pr.phase != PairPhase::key) continue;
    const int bit_a = pr.outcome_a > 0 ? 0 : 1;
    const int bit_b = pr.outcome_b > 0 ? 1 : 0;  // documented anticorrelation flip
    record.sifted_slots.push_back(pr.slot);
    record.raw_key_a.push_back(bit_a);
    record.raw_key_b.push_back(bit_b);
    record.sifted_key_a.push_back(bit_a);
    record.sifted_key_b.push_back(bit_b);
    if (bit_a == bit_b) ++correct;
  }

  auto& stats = record.stats;
  stats.n_slots = n_pairs;
  stats.detected = n_pairs;
  stats.sifted = record.sifted_key_a.size();
  stats.sift_fraction = static_cast<double>(stats.sifted) / n_pairs;
  stats.sifted_qber =
      stats.sifted ? 1.0 - static_cast<double>(correct) / stats.sifted : 0.0;
  stats.aggregate_error_rate = 1.0 - static_cast<double>(correct) / n_pairs;

  const auto est = detail::chsh_from_tally(tally, record.chsh_assignment);
  if (!est) {
    record.aborted = true;
    record.abort_reason = "insufficient check statistics";
    return record;
  }
  stats.chsh_s = est->s;
  stats.chsh_stderr = est->sigma;
  const double magnitude = std::abs(est->s);
  if (magnitude - 3 * est->sigma > 2.0) {
    record.aborted = false;
  } else {
    record.aborted = true;
    record.abort_reason = magnitude + 3 * est->sigma <= 2.0
                              ? "bell inequality not violated"
                              : "bell violation inconclusive";
  }
  return record;
}

/// AGM06: Alice draws x in {0,1,2}, Bob y in {1,2}; the key comes from
/// {A0, B1} (Q = P(a != b | x=0, y=1) after the documented flip) and the
/// security statistic from the {A1,A2} x {B1,B2} tallies. Abort unless
/// S > 2 by more than 3 sigma.
inline SessionRecord run_agm06(std::size_t n_pairs, const TwoQubitState& source_state,
                               const AdversaryConfig& adversary, std::uint64_t seed,
                               const Agm06Settings& settings = Agm06Settings{}) {
  if (n_pairs < 1) throw std::invalid_argument("run_agm06: n_pairs must be >= 1");
  adversary.validate();
  if (adversary.strategy == EveStrategy::pns)
    throw std::invalid_argument("run_agm06: pns strategy applies to pulse protocols only");

  RandomStream alice = make_stream(seed, "alice");
  RandomStream bob = make_stream(seed, "bob");
  RandomStream meas = make_stream(seed, "measure");
  RandomStream eve = make_stream(seed, "eve");

  SessionRecord record;
  record.protocol = Protocol::agm06;
  record.seed = seed;
  record.alice_setting_angles = {settings.a0, settings.a1, settings.a2};
  record.bob_setting_angles = {settings.b1, settings.b2};
  record.chsh_assignment = {settings.a1, settings.a2, settings.b1, settings.b2};
  record.pair_slots.reserve(n_pairs);

  CorrelationTally tally;
  std::size_t key_total = 0, key_mismatch = 0;

  for (std::size_t slot = 0; slot < n_pairs; ++slot) {
    PairSlot pr;
    pr.slot = slot;
    pr.alice_setting = static_cast<int>(alice.uniform_index(3));
    pr.bob_setting = static_cast<int>(bob.uniform_index(2));
    const double angle_a = record.alice_setting_angles[pr.alice_setting];
    const double angle_b = record.bob_setting_angles[pr.bob_setting];

    TwoQubitState state = source_state;
    if (adversary.strategy == EveStrategy::intercept_resend)
      state = eve_pair_intercept(state, adversary, eve);

    const PairOutcome out =
        sample_pair(state, MeasurementSetting(angle_a), MeasurementSetting(angle_b), meas);
    pr.outcome_a = out.a;
    pr.outcome_b = out.b;

    if (pr.alice_setting == 0 && pr.bob_setting == 0) {
      pr.phase = PairPhase::key;
      ++key_total;
      const int bit_a = out.a > 0 ? 0 : 1;
      const int bit_b = out.b > 0 ? 1 : 0;  // documented anticorrelation flip
      record.sifted_slots.push_back(slot);
      record.raw_key_a.push_back(bit_a);
      record.raw_key_b.push_back(bit_b);
      record.sifted_key_a.push_back(bit_a);
      record.sifted_key_b.push_back(bit_b);
      if (bit_a != bit_b) ++key_mismatch;
    } else if (pr.alice_setting >= 1) {
      pr.phase = PairPhase::check;
      tally.add(angle_a, angle_b, out.a, out.b);
    } else {
      pr.phase = PairPhase::discarded;  // (A0, B2)
    }
    record.pair_slots.push_back(pr);
  }

  auto& stats = record.stats;
  stats.n_slots = n_pairs;
  stats.detected = n_pairs;
  stats.sifted = key_total;
  stats.sift_fraction = static_cast<double>(key_total) / n_pairs;
  stats.sifted_qber = key_total ? static_cast<double>(key_mismatch) / key_total : 0.0;
  stats.aggregate_error_rate =
      1.0 - static_cast<double>(key_total - key_mismatch) / n_pairs;
  if (key_total) stats.agm06_q = stats.sifted_qber;

  const std::array<std::pair<double, double>, 4> pairs = {
      std::pair{settings.a1, settings.b1},
      {settings.a1, settings.b2},
      {settings.a2, settings.b1},
      {settings.a2, settings.b2}};
  for (const auto& [p, q] : pairs) {
    if (!tally.has(p, q)) {
      record.aborted = true;
      record.abort_reason = "insufficient check statistics";
      return record;
    }
  }
  auto p_eq = [&](double p, double q) {
    const OutcomeCounts& c = tally.at(p, q);
    return (c.pp + c.mm) / c.total();
  };
  auto p_var = [&](double p, double q, double prob) {
    return prob * (1.0 - prob) / tally.at(p, q).total();
  };
  const double p11 = p_eq(settings.a1, settings.b1);
  const double p12 = p_eq(settings.a1, settings.b2);
  const double p21 = p_eq(settings.a2, settings.b1);
  const double pneq22 = 1.0 - p_eq(settings.a2, settings.b2);
  const double s = agm06_s(p11, p12, p21, pneq22);
  const double sigma = std::sqrt(
      p_var(settings.a1, settings.b1, p11) + p_var(settings.a1, settings.b2, p12) +
      p_var(settings.a2, settings.b1, p21) + p_var(settings.a2, settings.b2, pneq22));
  stats.agm06_s_value = s;
  stats.agm06_s_stderr = sigma;
  if (s - 3 * sigma > 2.0) {
    record.aborted = false;
  } else {
    record.aborted = true;
    record.abort_reason =
        s + 3 * sigma <= 2.0 ? "s statistic not above 2" : "s statistic inconclusive";
  }
  return record;
}

// ---------------------------------------------------------------------------
// Replay mode
// ---------------------------------------------------------------------------

/// Explicit per-slot choices for a table-style BB84 walkthrough. All random
/// choices are overridden; only genuinely quantum outcomes still draw from
/// the seeded stream.
struct ReplayScript {
  std::vector<int> alice_bits;
  std::vector<char> alice_bases;  // '+' or 'x'
  std::vector<char> bob_bases;
  std::vector<char> eve_bases;          // empty = no eavesdropper
  std::vector<std::size_t> error_slots;  // forced pi/2 polarization errors
  std::uint64_t seed = 0;

  void validate() const {
    if (alice_bits.empty()) throw std::invalid_argument("replay: empty script");
    if (alice_bases.size() != alice_bits.size() || bob_bases.size() != alice_bits.size())
      throw std::invalid_argument("replay: sequence lengths differ");
    if (!eve_bases.empty() && eve_bases.size() != alice_bits.size())
      throw std::invalid_argument("replay: eve sequence length differs");
    for (int b : alice_bits)
      if (b != 0 && b != 1) throw std::invalid_argument("replay: bits must be 0/1");
    auto check_bases = [](const std::vector<char>& v) {
      for (char c : v)
        if (c != '+' && c != 'x')
          throw std::invalid_argument("replay: bases must be '+' or 'x'");
    };
    check_bases(alice_bases);
    check_bases(bob_bases);
    check_bases(eve_bases);
    for (std::size_t s : error_slots)
      if (s >= alice_bits.size())
        throw std::invalid_argument("replay: error slot out of range");
  }
};

/// Runs the BB84 pipeline with the supplied sequences over a lossless
/// channel, producing a per-slot transcript in the style of a worked table.
inline SessionRecord replay_bb84(const ReplayScript& script) {
  script.validate();
  RandomStream eve = make_stream(script.seed, "eve");
  RandomStream bob_meas = make_stream(script.seed, "bob-measure");

  SessionRecord record;
  record.protocol = Protocol::bb84;
  record.seed = script.seed;
  const std::size_t n = script.alice_bits.size();
  record.pulse_slots.reserve(n);

  for (std::size_t slot = 0; slot < n; ++slot) {
    PulseSlot ps;
    ps.slot = slot;
    ps.alice_bit = script.alice_bits[slot];
    ps.alice_basis = script.alice_bases[slot];
    const Basis prep = detail::basis_from_label(ps.alice_basis);
    Polarization pol = prep.outcome_polarization(ps.alice_bit);
    ps.alice_pol_angle = pol.angle();

    if (!script.eve_bases.empty()) {
      const Basis eve_basis = detail::basis_from_label(script.eve_bases[slot]);
      const int eve_bit = measure_photon(pol, eve_basis, eve);
      ps.eve_basis_angle = eve_basis.analyzer_angle();
      ps.eve_bit = eve_bit;
      pol = eve_basis.outcome_polarization(eve_bit);
    }
    if (std::find(script.error_slots.begin(), script.error_slots.end(), slot) !=
        script.error_slots.end()) {
      pol = pol.rotated(kPi / 2);
      ps.forced_error = true;
    }

    ps.bob_basis = script.bob_bases[slot];
    ps.detected = true;
    ps.bob_outcome =
        measure_photon(pol, detail::basis_from_label(ps.bob_basis), bob_meas);
    record.pulse_slots.push_back(ps);
  }

  detail::finish_pulse_session(record, [](const PulseSlot& s) -> std::optional<int> {
    if (s.alice_basis != s.bob_basis) return std::nullopt;
    return s.bob_outcome;
  });
  return record;
}

// ---------------------------------------------------------------------------
// Transcript sufficiency
// ---------------------------------------------------------------------------

/// Recomputes every reported statistic from the per-slot transcript alone;
/// used to check that a SessionRecord is self-contained.
inline SessionStats recompute_statistics(const SessionRecord& record) {
  SessionStats stats;
  if (!record.pulse_slots.empty()) {
    SessionRecord scratch;
    scratch.protocol = record.protocol;
    scratch.pulse_slots = record.pulse_slots;
    if (record.protocol == Protocol::sarg04) {
      detail::finish_pulse_session(scratch, [](const PulseSlot& s) -> std::optional<int> {
        const Sarg04Decode d = sarg04_conclusive(detail::basis_from_label(s.bob_basis),
                                                 s.bob_outcome, *s.announcement);
        if (!d.conclusive) return std::nullopt;
        return d.bit;
      });
    } else {
      detail::finish_pulse_session(scratch, [](const PulseSlot& s) -> std::optional<int> {
        if (s.alice_basis != s.bob_basis) return std::nullopt;
        return s.bob_outcome;
      });
    }
    return scratch.stats;
  }

  // Pair protocols.
  stats.n_slots = record.pair_slots.size();
  stats.detected = stats.n_slots;
  CorrelationTally tally;
  std::size_t key_total = 0, key_correct = 0;
  for (const PairSlot& pr : record.pair_slots) {
    const double angle_a = record.alice_setting_angles[pr.alice_setting];
    const double angle_b = record.bob_setting_angles[pr.bob_setting];
    if (pr.phase == PairPhase::key) {
      ++key_total;
      const int bit_a = pr.outcome_a > 0 ? 0 : 1;
      const int bit_b = pr.outcome_b > 0 ? 1 : 0;
      if (bit_a == bit_b) ++key_correct;
    } else if (pr.phase == PairPhase::check) {
      tally.add(angle_a, angle_b, pr.outcome_a, pr.outcome_b);
    }
  }
  stats.sifted = key_total;
  stats.sift_fraction =
      stats.n_slots ? static_cast<double>(key_total) / stats.n_slots : 0.0;
  stats.sifted_qber =
      key_total ? 1.0 - static_cast<double>(key_correct) / key_total : 0.0;
  stats.aggregate_error_rate =
      stats.n_slots ? 1.0 - static_cast<double>(key_correct) / stats.n_slots : 0.0;

  if (record.protocol == Protocol::e91) {
    const auto est = detail::chsh_from_tally(tally, record.chsh_assignment);
    if (est) {
      stats.chsh_s = est->s;
      stats.chsh_stderr = est->sigma;
    }
  } else if (record.protocol == Protocol::agm06) {
    const auto& [a1, a2, b1, b2] = record.chsh_assignment;
    const std::array<std::pair<double, double>, 4> combos = {
        std::pair{a1, b1}, {a1, b2}, {a2, b1}, {a2, b2}};
    bool complete = true;
    for (const auto& [p, q] : combos) complete = complete && tally.has(p, q);
    if (key_total) stats.agm06_q = stats.sifted_qber;
    if (complete) {
      auto p_eq = [&](double p, double q) {
        const OutcomeCounts& c = tally.at(p, q);
        return (c.pp + c.mm) / c.total();
      };
      stats.agm06_s_value = agm06_s(p_eq(a1, b1), p_eq(a1, b2), p_eq(a2, b1),
                                    1.0 - p_eq(a2, b2));
      double var = 0.0;
      for (const auto& [p, q] : combos) {
        const double prob = p_eq(p, q);
        const double cell = (std::abs(p - a2) < 1e-12 && std::abs(q - b2) < 1e-12)
                                ? 1.0 - prob
                                : prob;
        var += cell * (1.0 - cell) / tally.at(p, q).total();
      }
      stats.agm06_s_stderr = std::sqrt(var);
    }
  }
  return stats;
}

}  // namespace qkd
