#pragma once

#include <cmath>
#include <cstdio>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "qkd/config.hpp"
#include "qkd/protocols.hpp"
#include "qkd/version.hpp"

namespace qkd {

struct TrialSummary {
  std::size_t trial = 0;
  Protocol protocol = Protocol::bb84;
  std::size_t n_slots = 0, detected = 0, sifted = 0;
  double sift_fraction = 0, sifted_qber = 0, aggregate_error_rate = 0;
  std::optional<double> chsh_s, chsh_stderr, agm06_q, agm06_s, eve_agreement;
  std::optional<double> estimated_qber;
  std::size_t reconciled_bits = 0, final_bits = 0, leaked_bits = 0;
  double final_key_rate = 0;
  bool confirmed = false;
  Decision decision = Decision::proceed;
  std::string abort_reason;
};

inline TrialSummary summarize_trial(std::size_t index, const SessionRecord& record,
                                    Decision decision) {
  TrialSummary s;
  s.trial = index;
  s.protocol = record.protocol;
  s.n_slots = record.stats.n_slots;
  s.detected = record.stats.detected;
  s.sifted = record.stats.sifted;
  s.sift_fraction = record.stats.sift_fraction;
  s.sifted_qber = record.stats.sifted_qber;
  s.aggregate_error_rate = record.stats.aggregate_error_rate;
  s.chsh_s = record.stats.chsh_s;
  s.chsh_stderr = record.stats.chsh_stderr;
  s.agm06_q = record.stats.agm06_q;
  s.agm06_s = record.stats.agm06_s_value;
  s.eve_agreement = record.stats.eve_agreement;
  if (record.post) {
    s.estimated_qber = record.post->estimated_qber;
    s.reconciled_bits = record.post->reconciled_length;
    s.final_bits = record.post->final_key_a.size();
    s.leaked_bits = record.post->leaked_bits;
    s.confirmed = record.post->confirmed;
  }
  s.final_key_rate =
      s.n_slots ? static_cast<double>(s.final_bits) / s.n_slots : 0.0;
  s.decision = decision;
  s.abort_reason = record.abort_reason;
  return s;
}

struct AggregateStat {
  bool present = false;
  double mean = 0, stddev = 0;
};

struct RunReport {
  std::string version = kVersion;
  ExperimentConfig config;
  std::vector<TrialSummary> trials;
  AggregateStat sift_fraction, sifted_qber, aggregate_error_rate, chsh_s, agm06_q,
      agm06_s, final_key_rate;
  std::size_t proceed_count = 0, abort_count = 0;
};

namespace detail {

template <typename Getter>
AggregateStat aggregate_stat(const std::vector<TrialSummary>& trials, Getter&& get) {
  AggregateStat stat;
  std::vector<double> values;
  for (const TrialSummary& t : trials) {
    const std::optional<double> v = get(t);
    if (v) values.push_back(*v);
  }
  if (values.empty()) return stat;
  stat.present = true;
  double sum = 0;
  for (double v : values) sum += v;
  stat.mean = sum / values.size();
  double var = 0;
  for (double v : values) var += (v - stat.mean) * (v - stat.mean);
  stat.stddev = std::sqrt(var / values.size());
  return stat;
}

}  // namespace detail

inline void compute_aggregates(RunReport& report) {
  const auto& trials = report.trials;
  report.sift_fraction = detail::aggregate_stat(
      trials, [](const TrialSummary& t) { return std::optional<double>(t.sift_fraction); });
  report.sifted_qber = detail::aggregate_stat(
      trials, [](const TrialSummary& t) { return std::optional<double>(t.sifted_qber); });
  report.aggregate_error_rate =
      detail::aggregate_stat(trials, [](const TrialSummary& t) {
        return std::optional<double>(t.aggregate_error_rate);
      });
  report.chsh_s =
      detail::aggregate_stat(trials, [](const TrialSummary& t) { return t.chsh_s; });
  report.agm06_q =
      detail::aggregate_stat(trials, [](const TrialSummary& t) { return t.agm06_q; });
  report.agm06_s =
      detail::aggregate_stat(trials, [](const TrialSummary& t) { return t.agm06_s; });
  report.final_key_rate = detail::aggregate_stat(trials, [](const TrialSummary& t) {
    return std::optional<double>(t.final_key_rate);
  });
  report.proceed_count = report.abort_count = 0;
  for (const TrialSummary& t : trials)
    (t.decision == Decision::proceed ? report.proceed_count : report.abort_count)++;
}

// ---------------------------------------------------------------------------
// Serialization: stable field ordering, floats with 12 significant digits.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string fmt_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

inline std::string fmt_opt(const std::optional<double>& v) {
  return v ? fmt_double(*v) : "null";
}

inline std::string json_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

inline std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out.push_back('"');
    out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace detail

inline const char* decision_name(Decision d) {
  return d == Decision::proceed ? "continue" : "abort";
}

inline constexpr const char* kCsvHeader =
    "trial,protocol,slots,detected,sifted,sift_fraction,sifted_qber,"
    "aggregate_error_rate,chsh_s,chsh_stderr,agm06_q,agm06_s,eve_agreement,"
    "estimated_qber,reconciled_bits,final_bits,final_key_rate,leaked_bits,"
    "confirmed,decision,abort_reason,version";

namespace detail {

inline void emit_json_lines(const RunReport& report, std::ostream& os) {
  for (const TrialSummary& t : report.trials) {
    os << "{\"type\":\"trial\",\"trial\":" << t.trial << ",\"protocol\":\""
       << protocol_name(t.protocol) << "\",\"slots\":" << t.n_slots
       << ",\"detected\":" << t.detected << ",\"sifted\":" << t.sifted
       << ",\"sift_fraction\":" << fmt_double(t.sift_fraction)
       << ",\"sifted_qber\":" << fmt_double(t.sifted_qber)
       << ",\"aggregate_error_rate\":" << fmt_double(t.aggregate_error_rate)
       << ",\"chsh_s\":" << fmt_opt(t.chsh_s)
       << ",\"chsh_stderr\":" << fmt_opt(t.chsh_stderr)
       << ",\"agm06_q\":" << fmt_opt(t.agm06_q)
       << ",\"agm06_s\":" << fmt_opt(t.agm06_s)
       << ",\"eve_agreement\":" << fmt_opt(t.eve_agreement)
       << ",\"estimated_qber\":" << fmt_opt(t.estimated_qber)
       << ",\"reconciled_bits\":" << t.reconciled_bits
       << ",\"final_bits\":" << t.final_bits
       << ",\"final_key_rate\":" << fmt_double(t.final_key_rate)
       << ",\"leaked_bits\":" << t.leaked_bits
       << ",\"confirmed\":" << (t.confirmed ? "true" : "false")
       << ",\"decision\":\"" << decision_name(t.decision) << "\",\"abort_reason\":\""
       << json_escape(t.abort_reason) << "\"}\n";
  }
  auto agg = [&](const char* name, const AggregateStat& s) {
    std::string out = ",\"mean_";
    out += name;
    out += "\":";
    out += s.present ? fmt_double(s.mean) : "null";
    out += ",\"stddev_";
    out += name;
    out += "\":";
    out += s.present ? fmt_double(s.stddev) : "null";
    return out;
  };
  os << "{\"type\":\"aggregate\",\"version\":\"" << report.version
     << "\",\"trials\":" << report.trials.size()
     << ",\"continue_count\":" << report.proceed_count
     << ",\"abort_count\":" << report.abort_count
     << agg("sift_fraction", report.sift_fraction)
     << agg("sifted_qber", report.sifted_qber)
     << agg("aggregate_error_rate", report.aggregate_error_rate)
     << agg("chsh_s", report.chsh_s) << agg("agm06_q", report.agm06_q)
     << agg("agm06_s", report.agm06_s)
     << agg("final_key_rate", report.final_key_rate)
     << ",\"config\":" << config_echo(report.config).dump() << "}\n";
}

inline void emit_csv(const RunReport& report, std::ostream& os) {
  os << kCsvHeader << "\n";
  for (const TrialSummary& t : report.trials) {
    os << t.trial << ',' << protocol_name(t.protocol) << ',' << t.n_slots << ','
       << t.detected << ',' << t.sifted << ',' << fmt_double(t.sift_fraction) << ','
       << fmt_double(t.sifted_qber) << ',' << fmt_double(t.aggregate_error_rate) << ','
       << (t.chsh_s ? fmt_double(*t.chsh_s) : "") << ','
       << (t.chsh_stderr ? fmt_double(*t.chsh_stderr) : "") << ','
       << (t.agm06_q ? fmt_double(*t.agm06_q) : "") << ','
       << (t.agm06_s ? fmt_double(*t.agm06_s) : "") << ','
       << (t.eve_agreement ? fmt_double(*t.eve_agreement) : "") << ','
       << (t.estimated_qber ? fmt_double(*t.estimated_qber) : "") << ','
       << t.reconciled_bits << ',' << t.final_bits << ','
       << fmt_double(t.final_key_rate) << ',' << t.leaked_bits << ','
       << (t.confirmed ? "true" : "false") << ',' << decision_name(t.decision) << ','
       << csv_field(t.abort_reason) << ',' << report.version << "\n";
  }
  auto stat_cell = [](const AggregateStat& s, bool mean) {
    return s.present ? fmt_double(mean ? s.mean : s.stddev) : std::string();
  };
  for (bool mean : {true, false}) {
    os << (mean ? "mean" : "stddev") << ",,,,,"
       << stat_cell(report.sift_fraction, mean) << ','
       << stat_cell(report.sifted_qber, mean) << ','
       << stat_cell(report.aggregate_error_rate, mean) << ','
       << stat_cell(report.chsh_s, mean) << ",,"
       << stat_cell(report.agm06_q, mean) << ',' << stat_cell(report.agm06_s, mean)
       << ",,,,," << stat_cell(report.final_key_rate, mean) << ",,,,,"
       << report.version << "\n";
  }
}

inline void emit_human(const RunReport& report, std::ostream& os) {
  os << "qkdsim " << report.version << " — protocol "
     << protocol_name(report.config.protocol) << ", " << report.trials.size()
     << (report.trials.size() == 1 ? " trial" : " trials") << ", seed "
     << report.config.seed << ", "
     << (report.config.is_pair_protocol() ? "pairs" : "slots") << " per trial "
     << report.config.n_slots << "\n";
  for (const TrialSummary& t : report.trials) {
    os << "trial " << t.trial << ": sift fraction " << fmt_double(t.sift_fraction)
       << ", sifted QBER " << fmt_double(t.sifted_qber)
       << ", aggregate (discard + error) rate "
       << fmt_double(t.aggregate_error_rate);
    if (t.chsh_s) os << ", CHSH S " << fmt_double(*t.chsh_s);
    if (t.agm06_q) os << ", Q " << fmt_double(*t.agm06_q);
    if (t.agm06_s) os << ", S " << fmt_double(*t.agm06_s);
    if (t.eve_agreement) os << ", eve agreement " << fmt_double(*t.eve_agreement);
    if (t.final_bits) os << ", final key bits " << t.final_bits;
    os << ", decision " << decision_name(t.decision);
    if (!t.abort_reason.empty()) os << " (" << t.abort_reason << ")";
    os << "\n";
  }
  auto line = [&](const char* name, const AggregateStat& s) {
    if (s.present)
      os << name << ": mean " << fmt_double(s.mean) << ", stddev "
         << fmt_double(s.stddev) << "\n";
  };
  line("sift fraction", report.sift_fraction);
  line("sifted QBER", report.sifted_qber);
  line("aggregate (discard + error) rate", report.aggregate_error_rate);
  line("CHSH S", report.chsh_s);
  line("Q", report.agm06_q);
  line("S", report.agm06_s);
  line("final key rate", report.final_key_rate);
  os << "decisions: " << report.proceed_count << " continue, " << report.abort_count
     << " abort\n";
}

}  // namespace detail

/// Serializes the report with stable field ordering and 12-significant-digit
/// floats; identical (config, seed, version) yield identical bytes.
inline void emit_report(const RunReport& report, ReportFormat format, std::ostream& os) {
  switch (format) {
    case ReportFormat::json_lines: detail::emit_json_lines(report, os); break;
    case ReportFormat::csv: detail::emit_csv(report, os); break;
    case ReportFormat::human: detail::emit_human(report, os); break;
  }
}

inline std::string emit_report_string(const RunReport& report, ReportFormat format) {
  std::ostringstream os;
  emit_report(report, format, os);
  return os.str();
}

/// Exit status: 0 when every trial established a key, 2 when any trial
/// aborted (eavesdropping suspected).
inline int report_exit_code(const RunReport& report) {
  return report.abort_count == 0 ? 0 : 2;
}

// ---------------------------------------------------------------------------
// Replay transcripts
// ---------------------------------------------------------------------------

/// Per-slot walkthrough of a replayed session, in the style of a worked
/// table, followed by both error metrics and the decision.
inline void emit_replay(const SessionRecord& record, Decision decision,
                        ReportFormat format, std::ostream& os) {
  const bool has_eve = !record.pulse_slots.empty() &&
                       record.pulse_slots.front().eve_basis_angle.has_value();
  if (format == ReportFormat::json_lines) {
    for (const PulseSlot& s : record.pulse_slots) {
      os << "{\"type\":\"slot\",\"slot\":" << s.slot << ",\"alice_bit\":" << s.alice_bit
         << ",\"alice_basis\":\"" << s.alice_basis << "\"";
      if (s.eve_bit)
        os << ",\"eve_basis_angle\":" << detail::fmt_double(*s.eve_basis_angle)
           << ",\"eve_bit\":" << *s.eve_bit;
      os << ",\"forced_error\":" << (s.forced_error ? "true" : "false")
         << ",\"bob_basis\":\"" << s.bob_basis << "\",\"bob_outcome\":" << s.bob_outcome
         << ",\"bases_match\":"
         << (s.alice_basis == s.bob_basis ? "true" : "false") << "}\n";
    }
    os << "{\"type\":\"summary\",\"version\":" << '"' << kVersion << '"'
       << ",\"slots\":" << record.stats.n_slots << ",\"sifted\":" << record.stats.sifted
       << ",\"sift_fraction\":" << detail::fmt_double(record.stats.sift_fraction)
       << ",\"sifted_qber\":" << detail::fmt_double(record.stats.sifted_qber)
       << ",\"aggregate_error_rate\":"
       << detail::fmt_double(record.stats.aggregate_error_rate) << ",\"decision\":\""
       << decision_name(decision) << "\"}\n";
    return;
  }
  if (format == ReportFormat::csv) {
    os << "slot,alice_bit,alice_basis,eve_basis_angle,eve_bit,forced_error,bob_basis,"
          "bob_outcome,bases_match,sifted_bit_a,sifted_bit_b\n";
    for (const PulseSlot& s : record.pulse_slots) {
      const bool match = s.alice_basis == s.bob_basis;
      os << s.slot << ',' << s.alice_bit << ',' << s.alice_basis << ','
         << (s.eve_basis_angle ? detail::fmt_double(*s.eve_basis_angle) : "") << ','
         << (s.eve_bit ? std::to_string(*s.eve_bit) : "") << ','
         << (s.forced_error ? "true" : "false") << ',' << s.bob_basis << ','
         << s.bob_outcome << ',' << (match ? "C" : "W") << ','
         << (match ? std::to_string(s.alice_bit) : "") << ','
         << (match ? std::to_string(s.bob_outcome) : "") << "\n";
    }
    return;
  }
  os << "slot  A-bit  A-basis  ";
  if (has_eve) os << "E-basis  E-bit  ";
  os << "err  B-basis  B-out  match  sift-A  sift-B\n";
  for (const PulseSlot& s : record.pulse_slots) {
    const bool match = s.alice_basis == s.bob_basis;
    char line[160];
    std::snprintf(line, sizeof(line), "%-5zu %-6d %-8c ", s.slot, s.alice_bit,
                  s.alice_basis);
    os << line;
    if (has_eve) {
      std::snprintf(line, sizeof(line), "%-8s %-6s ",
                    s.eve_basis_angle ? detail::fmt_double(*s.eve_basis_angle).c_str() : "-",
                    s.eve_bit ? std::to_string(*s.eve_bit).c_str() : "-");
      os << line;
    }
    std::snprintf(line, sizeof(line), "%-4c %-8c %-6d %-6c %-7s %-7s\n",
                  s.forced_error ? '*' : '.', s.bob_basis, s.bob_outcome,
                  match ? 'C' : 'W', match ? std::to_string(s.alice_bit).c_str() : "-",
                  match ? std::to_string(s.bob_outcome).c_str() : "-");
    os << line;
  }
  os << "slots " << record.stats.n_slots << ", sifted " << record.stats.sifted
     << ", sift fraction " << detail::fmt_double(record.stats.sift_fraction)
     << "\nsifted QBER " << detail::fmt_double(record.stats.sifted_qber)
     << "\naggregate (discard + error) rate "
     << detail::fmt_double(record.stats.aggregate_error_rate) << "\ndecision "
     << decision_name(decision) << "\n";
}

}  // namespace qkd
