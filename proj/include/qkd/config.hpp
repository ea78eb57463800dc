#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "qkd/channel.hpp"
#include "qkd/postprocess.hpp"
#include "qkd/protocols.hpp"

namespace qkd {

using nlohmann::json;

struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

enum class SourceStateKind { singlet, psi_plus, product };

/// Source state selection for the entangled-pair protocols.
struct SourceStateConfig {
  SourceStateKind kind = SourceStateKind::singlet;
  double product_angle_a = 0.0;  // Bloch angles for kind == product
  double product_angle_b = 0.0;

  TwoQubitState build() const {
    switch (kind) {
      case SourceStateKind::singlet: return TwoQubitState::singlet();
      case SourceStateKind::psi_plus: return TwoQubitState::psi_plus();
      case SourceStateKind::product:
        return TwoQubitState::product(product_angle_a, product_angle_b);
    }
    return TwoQubitState::singlet();
  }
};

struct DecisionConfig {
  ErrorMetric metric = ErrorMetric::aggregate;
  double threshold = 0.5;
};

enum class ReportFormat { json_lines, csv, human };

/// Whole-experiment configuration. The seed is mandatory: there is no
/// wall-clock seeding anywhere.
struct ExperimentConfig {
  Protocol protocol = Protocol::bb84;
  std::size_t n_slots = 0;  // pair protocols read this as n_pairs
  std::uint64_t seed = 0;
  std::size_t trials = 1;
  ChannelConfig channel;
  AdversaryConfig adversary;
  SourceStateConfig source_state;
  E91Settings e91;
  Agm06Settings agm06;
  PostprocessParams postprocessing;
  bool postprocessing_enabled = true;
  DecisionConfig decision;
  ReportFormat format = ReportFormat::json_lines;

  bool is_pair_protocol() const {
    return protocol == Protocol::e91 || protocol == Protocol::agm06;
  }

  void validate() const {
    if (n_slots < 1) throw ConfigError("n_slots: must be >= 1");
    if (trials < 1) throw ConfigError("trials: must be >= 1");
    try {
      channel.validate();
      adversary.validate();
      postprocessing.validate();
      e91.validate();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(e.what());
    }
    if (is_pair_protocol() && adversary.strategy == EveStrategy::pns)
      throw ConfigError(
          "adversary.strategy: pns is incompatible with entangled-pair protocols");
    if (!(decision.threshold >= 0.0 && decision.threshold <= 1.0))
      throw ConfigError("decision.threshold: must be in [0,1]");
  }
};

namespace detail {

inline void expect_keys(const json& obj, const std::set<std::string>& allowed,
                        const std::string& path) {
  for (const auto& [key, value] : obj.items()) {
    (void)value;
    if (!allowed.count(key))
      throw ConfigError(path.empty() ? "unknown field '" + key + "'"
                                     : path + ": unknown field '" + key + "'");
  }
}

inline std::string join_path(const std::string& path, const std::string& key) {
  return path.empty() ? key : path + "." + key;
}

inline double get_number(const json& obj, const std::string& key, double fallback,
                         const std::string& path) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_number())
    throw ConfigError(join_path(path, key) + ": expected a number");
  return obj[key].get<double>();
}

inline std::string get_string(const json& obj, const std::string& key,
                              const std::string& fallback, const std::string& path) {
  if (!obj.contains(key)) return fallback;
  if (!obj[key].is_string())
    throw ConfigError(join_path(path, key) + ": expected a string");
  return obj[key].get<std::string>();
}

}  // namespace detail

inline ExperimentConfig parse_config(const json& root) {
  using detail::expect_keys;
  using detail::get_number;
  using detail::get_string;
  using detail::join_path;

  if (!root.is_object()) throw ConfigError("config root must be an object");
  expect_keys(root,
              {"protocol", "n_slots", "n_pairs", "seed", "trials", "channel",
               "adversary", "source_state", "e91", "agm06", "postprocessing",
               "decision", "format"},
              "");

  ExperimentConfig cfg;

  const std::string proto = get_string(root, "protocol", "", "");
  if (proto == "bb84")
    cfg.protocol = Protocol::bb84;
  else if (proto == "sarg04")
    cfg.protocol = Protocol::sarg04;
  else if (proto == "e91")
    cfg.protocol = Protocol::e91;
  else if (proto == "agm06")
    cfg.protocol = Protocol::agm06;
  else
    throw ConfigError("protocol: expected one of bb84, sarg04, e91, agm06");

  const bool pair = cfg.is_pair_protocol();
  const char* count_key = pair ? "n_pairs" : "n_slots";
  const char* wrong_key = pair ? "n_slots" : "n_pairs";
  if (root.contains(wrong_key))
    throw ConfigError(std::string(wrong_key) + ": use " + count_key + " for " + proto);
  if (!root.contains(count_key))
    throw ConfigError(std::string(count_key) + ": required");
  const json& count_src = root[count_key];
  if (!count_src.is_number_unsigned() || count_src.get<std::uint64_t>() < 1)
    throw ConfigError(std::string(count_key) + ": must be a positive integer");
  cfg.n_slots = count_src.get<std::size_t>();

  if (!root.contains("seed"))
    throw ConfigError("seed: required (no wall-clock seeding)");
  if (!root["seed"].is_number_unsigned())
    throw ConfigError("seed: must be a nonnegative integer");
  cfg.seed = root["seed"].get<std::uint64_t>();

  if (root.contains("trials")) {
    if (!root["trials"].is_number_unsigned() || root["trials"].get<std::uint64_t>() < 1)
      throw ConfigError("trials: must be a positive integer");
    cfg.trials = root["trials"].get<std::size_t>();
  }

  if (root.contains("channel")) {
    const json& ch = root["channel"];
    if (!ch.is_object()) throw ConfigError("channel: expected an object");
    expect_keys(ch, {"flip_probability", "loss_probability", "source_mode",
                     "mean_photon_number"},
                "channel");
    cfg.channel.flip_probability = get_number(ch, "flip_probability", 0.0, "channel");
    cfg.channel.loss_probability = get_number(ch, "loss_probability", 0.0, "channel");
    const std::string mode = get_string(ch, "source_mode", "single_photon", "channel");
    if (mode == "single_photon")
      cfg.channel.source_mode = SourceMode::single_photon;
    else if (mode == "weak_coherent")
      cfg.channel.source_mode = SourceMode::weak_coherent;
    else
      throw ConfigError("channel.source_mode: expected single_photon or weak_coherent");
    cfg.channel.mean_photon_number = get_number(ch, "mean_photon_number", 0.0, "channel");
  }

  if (root.contains("adversary")) {
    const json& adv = root["adversary"];
    if (!adv.is_object()) throw ConfigError("adversary: expected an object");
    expect_keys(adv, {"strategy", "blocking_fraction", "intercept_bases", "pair_angles"},
                "adversary");
    const std::string strategy = get_string(adv, "strategy", "none", "adversary");
    if (strategy == "none")
      cfg.adversary.strategy = EveStrategy::none;
    else if (strategy == "intercept-resend")
      cfg.adversary.strategy = EveStrategy::intercept_resend;
    else if (strategy == "pns")
      cfg.adversary.strategy = EveStrategy::pns;
    else
      throw ConfigError("adversary.strategy: expected none, intercept-resend or pns");
    cfg.adversary.blocking_fraction =
        get_number(adv, "blocking_fraction", 0.0, "adversary");
    if (adv.contains("intercept_bases")) {
      if (!adv["intercept_bases"].is_array())
        throw ConfigError("adversary.intercept_bases: expected an array");
      cfg.adversary.intercept_bases.clear();
      for (const json& item : adv["intercept_bases"]) {
        if (item.is_string() && item.get<std::string>() == "+")
          cfg.adversary.intercept_bases.push_back(Basis::rectilinear());
        else if (item.is_string() && item.get<std::string>() == "x")
          cfg.adversary.intercept_bases.push_back(Basis::diagonal());
        else if (item.is_number())
          cfg.adversary.intercept_bases.push_back(
              Basis(item.get<double>(), "custom"));
        else
          throw ConfigError(
              "adversary.intercept_bases: entries must be \"+\", \"x\" or an angle");
      }
    }
    if (adv.contains("pair_angles")) {
      if (!adv["pair_angles"].is_array())
        throw ConfigError("adversary.pair_angles: expected an array");
      cfg.adversary.pair_angles.clear();
      for (const json& item : adv["pair_angles"]) {
        if (!item.is_number())
          throw ConfigError("adversary.pair_angles: entries must be angles");
        cfg.adversary.pair_angles.push_back(item.get<double>());
      }
    }
  }

  if (root.contains("source_state")) {
    const json& ss = root["source_state"];
    if (!ss.is_object()) throw ConfigError("source_state: expected an object");
    expect_keys(ss, {"type", "angles"}, "source_state");
    const std::string type = get_string(ss, "type", "singlet", "source_state");
    if (type == "singlet")
      cfg.source_state.kind = SourceStateKind::singlet;
    else if (type == "psi_plus")
      cfg.source_state.kind = SourceStateKind::psi_plus;
    else if (type == "product")
      cfg.source_state.kind = SourceStateKind::product;
    else
      throw ConfigError("source_state.type: expected singlet, psi_plus or product");
    if (cfg.source_state.kind == SourceStateKind::product) {
      if (!ss.contains("angles") || !ss["angles"].is_array() || ss["angles"].size() != 2 ||
          !ss["angles"][0].is_number() || !ss["angles"][1].is_number())
        throw ConfigError("source_state.angles: product state needs [angle_a, angle_b]");
      cfg.source_state.product_angle_a = ss["angles"][0].get<double>();
      cfg.source_state.product_angle_b = ss["angles"][1].get<double>();
    }
  }

  if (root.contains("e91")) {
    const json& e = root["e91"];
    if (!e.is_object()) throw ConfigError("e91: expected an object");
    expect_keys(e, {"check_fraction"}, "e91");
    cfg.e91.check_fraction = get_number(e, "check_fraction", 0.5, "e91");
  }

  if (root.contains("agm06")) {
    const json& a = root["agm06"];
    if (!a.is_object()) throw ConfigError("agm06: expected an object");
    expect_keys(a, {"a0", "a1", "a2", "b1", "b2"}, "agm06");
    cfg.agm06.a0 = get_number(a, "a0", cfg.agm06.a0, "agm06");
    cfg.agm06.a1 = get_number(a, "a1", cfg.agm06.a1, "agm06");
    cfg.agm06.a2 = get_number(a, "a2", cfg.agm06.a2, "agm06");
    cfg.agm06.b1 = get_number(a, "b1", cfg.agm06.b1, "agm06");
    cfg.agm06.b2 = get_number(a, "b2", cfg.agm06.b2, "agm06");
  }

  if (root.contains("postprocessing")) {
    const json& pp = root["postprocessing"];
    if (!pp.is_object()) throw ConfigError("postprocessing: expected an object");
    expect_keys(pp,
                {"enabled", "sample_fraction", "block_schedule", "eve_bound_factor",
                 "safety_margin"},
                "postprocessing");
    if (pp.contains("enabled")) {
      if (!pp["enabled"].is_boolean())
        throw ConfigError("postprocessing.enabled: expected a boolean");
      cfg.postprocessing_enabled = pp["enabled"].get<bool>();
    }
    cfg.postprocessing.sample_fraction =
        get_number(pp, "sample_fraction", 0.25, "postprocessing");
    cfg.postprocessing.eve_bound_factor =
        get_number(pp, "eve_bound_factor", 1.2, "postprocessing");
    if (pp.contains("safety_margin")) {
      if (!pp["safety_margin"].is_number_unsigned())
        throw ConfigError("postprocessing.safety_margin: must be a nonnegative integer");
      cfg.postprocessing.safety_margin = pp["safety_margin"].get<std::size_t>();
    }
    if (pp.contains("block_schedule")) {
      if (!pp["block_schedule"].is_array())
        throw ConfigError("postprocessing.block_schedule: expected an array");
      cfg.postprocessing.block_schedule.clear();
      for (const json& item : pp["block_schedule"]) {
        if (!item.is_number_unsigned() || item.get<std::uint64_t>() < 1)
          throw ConfigError(
              "postprocessing.block_schedule: entries must be positive integers");
        cfg.postprocessing.block_schedule.push_back(item.get<std::size_t>());
      }
    }
  }

  // Decision defaults are protocol-dependent; SARG04's aggregate rate is
  // ~0.75 even on a clean channel, so it thresholds the sifted QBER instead.
  if (cfg.protocol == Protocol::sarg04) {
    cfg.decision.metric = ErrorMetric::sifted_qber;
    cfg.decision.threshold = 0.15;
  }
  if (root.contains("decision")) {
    const json& d = root["decision"];
    if (!d.is_object()) throw ConfigError("decision: expected an object");
    expect_keys(d, {"metric", "threshold"}, "decision");
    const std::string metric = get_string(
        d, "metric",
        cfg.decision.metric == ErrorMetric::aggregate ? "aggregate" : "sifted_qber",
        "decision");
    if (metric == "aggregate")
      cfg.decision.metric = ErrorMetric::aggregate;
    else if (metric == "sifted_qber")
      cfg.decision.metric = ErrorMetric::sifted_qber;
    else
      throw ConfigError("decision.metric: expected aggregate or sifted_qber");
    cfg.decision.threshold = get_number(d, "threshold", cfg.decision.threshold, "decision");
  }

  const std::string format = get_string(root, "format", "json-lines", "");
  if (format == "json-lines")
    cfg.format = ReportFormat::json_lines;
  else if (format == "csv")
    cfg.format = ReportFormat::csv;
  else if (format == "human")
    cfg.format = ReportFormat::human;
  else
    throw ConfigError("format: expected json-lines, csv or human");

  cfg.validate();
  return cfg;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(root);
}

/// Canonical echo: every field materialized, defaults included. Re-parsing
/// the echo yields an equal config.
inline json config_echo(const ExperimentConfig& cfg) {
  json root;
  root["protocol"] = protocol_name(cfg.protocol);
  root[cfg.is_pair_protocol() ? "n_pairs" : "n_slots"] = cfg.n_slots;
  root["seed"] = cfg.seed;
  root["trials"] = cfg.trials;
  root["channel"] = {
      {"flip_probability", cfg.channel.flip_probability},
      {"loss_probability", cfg.channel.loss_probability},
      {"source_mode", cfg.channel.source_mode == SourceMode::weak_coherent
                          ? "weak_coherent"
                          : "single_photon"},
      {"mean_photon_number", cfg.channel.mean_photon_number}};
  json bases = json::array();
  for (const Basis& b : cfg.adversary.intercept_bases) {
    if (b == Basis::rectilinear())
      bases.push_back("+");
    else if (b == Basis::diagonal())
      bases.push_back("x");
    else
      bases.push_back(b.analyzer_angle());
  }
  root["adversary"] = {
      {"strategy", cfg.adversary.strategy == EveStrategy::none ? "none"
                   : cfg.adversary.strategy == EveStrategy::intercept_resend
                       ? "intercept-resend"
                       : "pns"},
      {"blocking_fraction", cfg.adversary.blocking_fraction},
      {"intercept_bases", bases},
      {"pair_angles", cfg.adversary.pair_angles}};
  if (cfg.is_pair_protocol()) {
    json ss;
    ss["type"] = cfg.source_state.kind == SourceStateKind::singlet    ? "singlet"
                 : cfg.source_state.kind == SourceStateKind::psi_plus ? "psi_plus"
                                                                      : "product";
    if (cfg.source_state.kind == SourceStateKind::product)
      ss["angles"] = {cfg.source_state.product_angle_a, cfg.source_state.product_angle_b};
    root["source_state"] = ss;
  }
  if (cfg.protocol == Protocol::e91)
    root["e91"] = {{"check_fraction", cfg.e91.check_fraction}};
  if (cfg.protocol == Protocol::agm06)
    root["agm06"] = {{"a0", cfg.agm06.a0}, {"a1", cfg.agm06.a1}, {"a2", cfg.agm06.a2},
                     {"b1", cfg.agm06.b1}, {"b2", cfg.agm06.b2}};
  root["postprocessing"] = {{"enabled", cfg.postprocessing_enabled},
                            {"sample_fraction", cfg.postprocessing.sample_fraction},
                            {"block_schedule", cfg.postprocessing.block_schedule},
                            {"eve_bound_factor", cfg.postprocessing.eve_bound_factor},
                            {"safety_margin", cfg.postprocessing.safety_margin}};
  root["decision"] = {
      {"metric",
       cfg.decision.metric == ErrorMetric::aggregate ? "aggregate" : "sifted_qber"},
      {"threshold", cfg.decision.threshold}};
  root["format"] = cfg.format == ReportFormat::json_lines ? "json-lines"
                   : cfg.format == ReportFormat::csv      ? "csv"
                                                          : "human";
  return root;
}

// ---------------------------------------------------------------------------
// Replay scripts
// ---------------------------------------------------------------------------

struct ReplayFile {
  ReplayScript script;
  std::optional<DecisionConfig> decision;
};

inline ReplayFile parse_replay(const json& root) {
  using detail::expect_keys;
  if (!root.is_object()) throw ConfigError("replay root must be an object");
  expect_keys(root,
              {"protocol", "alice_bits", "alice_bases", "bob_bases", "eve_bases",
               "error_slots", "seed", "decision"},
              "");
  const std::string proto = detail::get_string(root, "protocol", "bb84", "");
  if (proto != "bb84")
    throw ConfigError("protocol: replay supports bb84 walkthroughs");

  ReplayFile file;
  auto read_bits = [&](const char* key, std::vector<int>& out) {
    if (!root.contains(key) || !root[key].is_array())
      throw ConfigError(std::string(key) + ": required array");
    for (const json& item : root[key]) {
      if (!item.is_number_integer())
        throw ConfigError(std::string(key) + ": entries must be 0/1");
      out.push_back(item.get<int>());
    }
  };
  auto read_bases = [&](const char* key, std::vector<char>& out, bool required) {
    if (!root.contains(key)) {
      if (required) throw ConfigError(std::string(key) + ": required array");
      return;
    }
    if (!root[key].is_array()) throw ConfigError(std::string(key) + ": expected array");
    for (const json& item : root[key]) {
      if (!item.is_string() || item.get<std::string>().size() != 1)
        throw ConfigError(std::string(key) + ": entries must be \"+\" or \"x\"");
      out.push_back(item.get<std::string>()[0]);
    }
  };
  read_bits("alice_bits", file.script.alice_bits);
  read_bases("alice_bases", file.script.alice_bases, true);
  read_bases("bob_bases", file.script.bob_bases, true);
  read_bases("eve_bases", file.script.eve_bases, false);
  if (root.contains("error_slots")) {
    if (!root["error_slots"].is_array())
      throw ConfigError("error_slots: expected array");
    for (const json& item : root["error_slots"]) {
      if (!item.is_number_unsigned())
        throw ConfigError("error_slots: entries must be slot indices");
      file.script.error_slots.push_back(item.get<std::size_t>());
    }
  }
  if (root.contains("seed")) {
    if (!root["seed"].is_number_unsigned())
      throw ConfigError("seed: must be a nonnegative integer");
    file.script.seed = root["seed"].get<std::uint64_t>();
  }
  if (root.contains("decision")) {
    const json& d = root["decision"];
    expect_keys(d, {"metric", "threshold"}, "decision");
    DecisionConfig dc;
    const std::string metric = detail::get_string(d, "metric", "aggregate", "decision");
    if (metric == "aggregate")
      dc.metric = ErrorMetric::aggregate;
    else if (metric == "sifted_qber")
      dc.metric = ErrorMetric::sifted_qber;
    else
      throw ConfigError("decision.metric: expected aggregate or sifted_qber");
    dc.threshold = detail::get_number(d, "threshold", 0.5, "decision");
    file.decision = dc;
  }
  try {
    file.script.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
  return file;
}

}  // namespace qkd
