#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "qkd/quantum.hpp"
#include "qkd/rng.hpp"

namespace qkd {

enum class SourceMode { single_photon, weak_coherent };

/// Quantum channel model: polarization disturbance, per-photon loss, and the
/// light source's photon-number statistics. Background photons, detector
/// noise and polarization imperfections are all folded into flip/loss.
struct ChannelConfig {
  double flip_probability = 0.0;
  double loss_probability = 0.0;
  SourceMode source_mode = SourceMode::single_photon;
  double mean_photon_number = 0.0;  // weak_coherent only

  void validate() const {
    if (!(flip_probability >= 0.0 && flip_probability <= 1.0))
      throw std::invalid_argument("channel.flip_probability: must be in [0,1]");
    if (!(loss_probability >= 0.0 && loss_probability <= 1.0))
      throw std::invalid_argument("channel.loss_probability: must be in [0,1]");
    if (source_mode == SourceMode::weak_coherent && !(mean_photon_number > 0.0))
      throw std::invalid_argument(
          "channel.mean_photon_number: must be > 0 for a weak coherent source");
  }
};

enum class EveStrategy { none, intercept_resend, pns };

/// Eavesdropper strategy and parameters.
///  - intercept_resend: measure each pulse in a basis drawn uniformly from
///    `intercept_bases` (pair protocols: measure both qubits along a common
///    angle from `pair_angles`) and re-emit the outcome eigenstate.
///  - pns: split multiphoton pulses, store one photon, optionally block
///    single-photon pulses with `blocking_fraction`.
struct AdversaryConfig {
  EveStrategy strategy = EveStrategy::none;
  std::vector<Basis> intercept_bases = {Basis::rectilinear(), Basis::diagonal()};
  std::vector<double> pair_angles = {0.0, kPi / 4, kPi / 2, 3 * kPi / 4};
  double blocking_fraction = 0.0;

  void validate() const {
    if (strategy == EveStrategy::intercept_resend && intercept_bases.empty())
      throw std::invalid_argument("adversary.intercept_bases: must not be empty");
    if (strategy == EveStrategy::intercept_resend && pair_angles.empty())
      throw std::invalid_argument("adversary.pair_angles: must not be empty");
    if (!(blocking_fraction >= 0.0 && blocking_fraction <= 1.0))
      throw std::invalid_argument("adversary.blocking_fraction: must be in [0,1]");
  }
};

/// What Eve retains about one slot.
struct EveSlotRecord {
  std::size_t slot = 0;
  std::optional<Basis> measured_basis;    // intercept-resend
  std::optional<int> measured_bit;        // intercept-resend
  unsigned stored_photons = 0;            // pns
  std::optional<Polarization> stored_polarization;  // pns quantum memory
};

/// Eve's whole-session transcript; slot indices strictly increase.
class EveRecord {
 public:
  void append(EveSlotRecord entry) {
    if (!entries_.empty() && entry.slot <= entries_.back().slot)
      throw std::invalid_argument("EveRecord slots must be strictly increasing");
    entries_.push_back(std::move(entry));
  }

  const std::vector<EveSlotRecord>& entries() const { return entries_; }
  bool empty() const { return entries_.empty(); }

 private:
  std::vector<EveSlotRecord> entries_;
};

/// Emits one source pulse at the requested polarization. Single-photon
/// sources always emit exactly one photon; weak coherent sources draw the
/// photon number from a Poisson distribution.
inline Pulse emit_pulse(const ChannelConfig& config, const Polarization& pol,
                        std::size_t slot, RandomStream& rng) {
  unsigned count = 1;
  if (config.source_mode == SourceMode::weak_coherent)
    count = rng.poisson(config.mean_photon_number);
  return Pulse{count, pol, slot};
}

/// Propagates a pulse through the channel: each photon is independently lost
/// with loss_probability; a surviving pulse's polarization is rotated by
/// pi/2 (a basis-orthogonal error) with flip_probability.
inline Pulse transmit(const Pulse& pulse, const ChannelConfig& config,
                      RandomStream& rng) {
  unsigned survivors = 0;
  for (unsigned i = 0; i < pulse.photon_count; ++i)
    if (!rng.bernoulli(config.loss_probability)) ++survivors;
  if (survivors == 0) return Pulse::vacuum(pulse.slot);
  Polarization pol = pulse.polarization;
  if (rng.bernoulli(config.flip_probability)) pol = pol.rotated(kPi / 2);
  return Pulse{survivors, pol, pulse.slot};
}

/// Intercept-resend on a prepare-and-measure pulse: Eve measures in a basis
/// drawn uniformly from her set, records the bit, and re-emits a fresh pulse
/// polarized per her outcome. Vacuum passes through unrecorded.
inline Pulse eve_intercept_resend(const Pulse& pulse, const AdversaryConfig& config,
                                  EveRecord& record, RandomStream& rng) {
  if (pulse.is_vacuum()) return pulse;
  const Basis& basis =
      config.intercept_bases[rng.uniform_index(config.intercept_bases.size())];
  const int bit = measure_photon(pulse.polarization, basis, rng);
  record.append({pulse.slot, basis, bit, 0, std::nullopt});
  return Pulse{pulse.photon_count, basis.outcome_polarization(bit), pulse.slot};
}

/// Photon-number-splitting: for multiphoton pulses Eve keeps one photon in
/// quantum memory (measured only after the public announcements) and
/// forwards the rest losslessly; single-photon pulses are blocked with the
/// configured fraction, otherwise passed untouched.
inline Pulse eve_pns(const Pulse& pulse, const AdversaryConfig& config,
                     EveRecord& record, RandomStream& rng) {
  if (pulse.is_vacuum()) return pulse;
  if (pulse.photon_count >= 2) {
    record.append({pulse.slot, std::nullopt, std::nullopt, 1, pulse.polarization});
    return Pulse{pulse.photon_count - 1, pulse.polarization, pulse.slot};
  }
  if (rng.bernoulli(config.blocking_fraction)) return Pulse::vacuum(pulse.slot);
  return pulse;
}

/// Applies the configured strategy to one pulse.
inline Pulse eve_apply(const Pulse& pulse, const AdversaryConfig& config,
                       EveRecord& record, RandomStream& rng) {
  switch (config.strategy) {
    case EveStrategy::none:
      return pulse;
    case EveStrategy::intercept_resend:
      return eve_intercept_resend(pulse, config, record, rng);
    case EveStrategy::pns:
      return eve_pns(pulse, config, record, rng);
  }
  return pulse;
}

/// Measure-and-reprepare attack on an entangled pair source: Eve measures
/// both qubits along a common angle drawn from her set and forwards the
/// product of the outcome eigenstates.
inline TwoQubitState eve_pair_intercept(const TwoQubitState& state,
                                        const AdversaryConfig& config,
                                        RandomStream& rng) {
  const double theta = config.pair_angles[rng.uniform_index(config.pair_angles.size())];
  const MeasurementSetting setting(theta);
  const PairOutcome outcome = sample_pair(state, setting, setting, rng);
  const double angle_a = outcome.a > 0 ? theta : theta + kPi;
  const double angle_b = outcome.b > 0 ? theta : theta + kPi;
  return TwoQubitState::product(angle_a, angle_b);
}

/// Eve's deferred measurement of a stored PNS photon once the slot's basis
/// is announced (a copy measured in the announced basis yields the encoded
/// bit exactly).
inline int eve_infer_announced_basis(const EveSlotRecord& entry, const Basis& announced,
                                     RandomStream& rng) {
  if (!entry.stored_polarization)
    throw std::invalid_argument("eve_infer_announced_basis: no stored photon");
  return measure_photon(*entry.stored_polarization, announced, rng);
}

/// Eve's optimal discrimination between the two announced candidate
/// polarizations, as a projective measurement straddling them. For the pair
/// separations that occur with non-orthogonal announcements the success
/// probability is cos^2(pi/8) per stored photon. Returns the guessed index
/// (0 = first candidate).
inline int eve_infer_between(const EveSlotRecord& entry, const Polarization& cand0,
                             const Polarization& cand1, RandomStream& rng) {
  if (!entry.stored_polarization)
    throw std::invalid_argument("eve_infer_between: no stored photon");
  // Projector assigned to cand0 sits pi/4 from the midpoint, on cand0's side.
  const double mid = (cand0.angle() + cand1.angle()) / 2;
  const double toward0 = cand0.angle() >= cand1.angle() ? 1.0 : -1.0;
  const double g0 = mid + toward0 * kPi / 4;
  const double c = std::cos(entry.stored_polarization->angle() - g0);
  return rng.bernoulli(c * c) ? 0 : 1;
}

}  // namespace qkd
