#pragma once

#include <atomic>
#include <thread>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/postprocess.hpp"
#include "qkd/protocols.hpp"
#include "qkd/report.hpp"

namespace qkd {

struct TrialOutcome {
  SessionRecord record;
  Decision decision = Decision::proceed;
};

/// One protocol session from an experiment config; trial streams derive from
/// (seed, trial_index) only, so trials are independent and order-free.
inline TrialOutcome run_single_trial(const ExperimentConfig& cfg, std::size_t trial_index) {
  const std::uint64_t trial_seed = derive_seed(cfg.seed, "trial", trial_index);
  TrialOutcome outcome;
  switch (cfg.protocol) {
    case Protocol::bb84:
      outcome.record = run_bb84(cfg.n_slots, cfg.channel, cfg.adversary, trial_seed);
      break;
    case Protocol::sarg04:
      outcome.record = run_sarg04(cfg.n_slots, cfg.channel, cfg.adversary, trial_seed);
      break;
    case Protocol::e91:
      outcome.record = run_e91(cfg.n_slots, cfg.source_state.build(), cfg.adversary,
                               trial_seed, cfg.e91);
      break;
    case Protocol::agm06:
      outcome.record = run_agm06(cfg.n_slots, cfg.source_state.build(), cfg.adversary,
                                 trial_seed, cfg.agm06);
      break;
  }

  if (cfg.is_pair_protocol()) {
    outcome.decision = outcome.record.aborted ? Decision::abort : Decision::proceed;
  } else {
    outcome.decision =
        bb84_decision(outcome.record, cfg.decision.metric, cfg.decision.threshold);
    if (outcome.decision == Decision::abort) {
      outcome.record.aborted = true;
      outcome.record.abort_reason = "error rate above threshold";
    }
  }

  if (outcome.decision == Decision::proceed && cfg.postprocessing_enabled) {
    RandomStream pub = make_stream(trial_seed, "public-post");
    outcome.record.post = run_postprocessing(outcome.record.sifted_key_a,
                                             outcome.record.sifted_key_b,
                                             cfg.postprocessing, pub);
  }
  return outcome;
}

/// Executes all trials (optionally in parallel) and assembles the report in
/// trial-index order, so output is deterministic regardless of scheduling.
inline RunReport run_experiment(const ExperimentConfig& cfg, std::size_t jobs = 1) {
  cfg.validate();
  RunReport report;
  report.config = cfg;
  report.trials.reserve(cfg.trials);

  if (jobs <= 1) {
    for (std::size_t t = 0; t < cfg.trials; ++t) {
      const TrialOutcome outcome = run_single_trial(cfg, t);
      report.trials.push_back(summarize_trial(t, outcome.record, outcome.decision));
    }
  } else {
    std::vector<TrialOutcome> outcomes(cfg.trials);
    std::atomic<std::size_t> cursor{0};
    auto worker = [&]() {
      for (std::size_t t = cursor.fetch_add(1); t < cfg.trials; t = cursor.fetch_add(1))
        outcomes[t] = run_single_trial(cfg, t);
    };
    std::vector<std::thread> pool;
    const std::size_t n_workers = std::min(jobs, cfg.trials);
    pool.reserve(n_workers);
    for (std::size_t i = 0; i < n_workers; ++i) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    for (std::size_t t = 0; t < cfg.trials; ++t)
      report.trials.push_back(
          summarize_trial(t, outcomes[t].record, outcomes[t].decision));
  }
  compute_aggregates(report);
  return report;
}

/// Replays an explicit BB84 walkthrough and applies the decision rule
/// (default: aggregate metric at threshold 0.5).
inline TrialOutcome run_replay(const ReplayFile& file) {
  TrialOutcome outcome;
  outcome.record = replay_bb84(file.script);
  const DecisionConfig decision = file.decision.value_or(DecisionConfig{});
  outcome.decision =
      bb84_decision(outcome.record, decision.metric, decision.threshold);
  if (outcome.decision == Decision::abort) {
    outcome.record.aborted = true;
    outcome.record.abort_reason = "error rate above threshold";
  }
  return outcome;
}

}  // namespace qkd
