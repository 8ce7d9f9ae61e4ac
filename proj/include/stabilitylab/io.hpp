#pragma once

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <json.hpp>

#include "stabilitylab/analysis.hpp"
#include "stabilitylab/errors.hpp"
#include "stabilitylab/experiment.hpp"
#include "stabilitylab/version.hpp"

namespace stabilitylab {

// ---------------------------------------------------------------------------
// Formatting and file primitives
// ---------------------------------------------------------------------------

namespace detail {

// Report-table format: 9 significant digits, locale-independent. Enough for
// any plotting or comparison use of the tables; write(read(file)) is
// byte-stable for files this writer made.
inline std::string fmt_g9(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

// Shortest decimal string of at least 9 significant digits (fewer only when
// %g trims trailing zeros) that parses back to the exact same double. Used
// for pipeline data (spectrogram bodies, axes, scan points), where a fixed
// digit count would leak rounding error into downstream fits. Shot-fraction
// probabilities stay short; only values that genuinely need more digits to
// survive a round trip get them.
inline std::string fmt_exact(double v) {
  if (v == 0.0) return "0";
  char buf[40];
  for (int prec = 9; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string::size_type start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

inline double parse_double(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const double v = std::stod(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": expected a number, got '" + tok + "'");
  }
}

inline int parse_int(const std::string& tok, const std::string& where) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(tok, &used);
    if (used != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw IoError(where + ": expected an integer, got '" + tok + "'");
  }
}

}  // namespace detail

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed on '" + path + "'");
  return buf.str();
}

// Write-temp-then-rename so a crash or a concurrent reader never observes a
// half-written file.
inline void atomic_write_text(const std::string& path,
                              const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + tmp + "' for writing");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed on '" + tmp + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    throw IoError("cannot rename '" + tmp + "' to '" + path +
                  "': " + ec.message());
  }
}

// FNV-1a, 64-bit; fast and adequate for manifest change detection.
inline std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view bytes) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "fnv1a64:%016llx",
                static_cast<unsigned long long>(fnv1a64(bytes)));
  return buf;
}

// ---------------------------------------------------------------------------
// Spectrogram files
// ---------------------------------------------------------------------------

inline void write_spectrogram(std::ostream& os, const Spectrogram& s) {
  os << "# stf-spectrogram v1\n";
  os << "# qubit " << s.meta.qubit << "\n";
  os << "# cycle " << s.meta.cycle << "\n";
  os << "# clock_hours " << detail::fmt_exact(s.meta.clock_hours) << "\n";
  for (std::size_t i = 0; i < s.grid.freq_ghz.size(); ++i) {
    os << (i ? "," : "") << detail::fmt_exact(s.grid.freq_ghz[i]);
  }
  os << "\n";
  for (std::size_t i = 0; i < s.grid.delay_us.size(); ++i) {
    os << (i ? "," : "") << detail::fmt_exact(s.grid.delay_us[i]);
  }
  os << "\n";
  for (std::size_t r = 0; r < s.values.rows(); ++r) {
    for (std::size_t c = 0; c < s.values.cols(); ++c) {
      os << (c ? "," : "") << detail::fmt_exact(s.values(r, c));
    }
    os << "\n";
  }
}

inline std::string spectrogram_text(const Spectrogram& s) {
  std::ostringstream os;
  write_spectrogram(os, s);
  return os.str();
}

inline void write_spectrogram_file(const std::string& path,
                                   const Spectrogram& s) {
  atomic_write_text(path, spectrogram_text(s));
}

inline Spectrogram read_spectrogram(std::istream& in,
                                    const std::string& origin) {
  auto fail = [&](int line_no, const std::string& what) -> IoError {
    return IoError(origin + ":" + std::to_string(line_no) + ": " + what);
  };
  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) {
      throw fail(line_no + 1, "unexpected end of file");
    }
    ++line_no;
  };

  next_line();
  if (line != "# stf-spectrogram v1") {
    throw fail(line_no, "not a spectrogram file (expected header "
                        "'# stf-spectrogram v1')");
  }
  Spectrogram s;
  next_line();
  if (line.rfind("# qubit ", 0) != 0) throw fail(line_no, "expected '# qubit'");
  s.meta.qubit = line.substr(8);
  next_line();
  if (line.rfind("# cycle ", 0) != 0) throw fail(line_no, "expected '# cycle'");
  s.meta.cycle = detail::parse_int(line.substr(8), origin + " cycle");
  next_line();
  if (line.rfind("# clock_hours ", 0) != 0) {
    throw fail(line_no, "expected '# clock_hours'");
  }
  s.meta.clock_hours =
      detail::parse_double(line.substr(14), origin + " clock_hours");

  next_line();
  for (const std::string& tok : detail::split_csv(line)) {
    s.grid.freq_ghz.push_back(
        detail::parse_double(tok, origin + " frequency line"));
  }
  next_line();
  for (const std::string& tok : detail::split_csv(line)) {
    s.grid.delay_us.push_back(detail::parse_double(tok, origin + " delay line"));
  }
  try {
    validate(s.grid);
  } catch (const ConfigError& e) {
    throw fail(line_no, std::string("bad grid axes: ") + e.what());
  }

  const std::size_t n_tau = s.grid.delay_us.size();
  const std::size_t n_omega = s.grid.freq_ghz.size();
  s.values = Matrix(n_tau, n_omega);
  for (std::size_t r = 0; r < n_tau; ++r) {
    next_line();
    const std::vector<std::string> toks = detail::split_csv(line);
    if (toks.size() != n_omega) {
      throw fail(line_no, "expected " + std::to_string(n_omega) +
                              " values in a row, got " +
                              std::to_string(toks.size()));
    }
    for (std::size_t c = 0; c < n_omega; ++c) {
      s.values(r, c) = detail::parse_double(toks[c], origin + " data row");
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty()) throw fail(line_no, "trailing content after data rows");
  }
  return s;
}

inline Spectrogram read_spectrogram_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  return read_spectrogram(in, path);
}

// ---------------------------------------------------------------------------
// Arch scan and decay-trace files
// ---------------------------------------------------------------------------

inline std::string arch_scan_text(const ArchScan& scan) {
  std::ostringstream os;
  os << "# stf-archscan v1\n";
  os << "# mutual_phi0_per_ma " << detail::fmt_exact(scan.mutual_phi0_per_ma)
     << "\n";
  os << "# sigma_f_mhz " << detail::fmt_exact(scan.sigma_f_mhz) << "\n";
  os << "bias_ma,freq_ghz\n";
  for (std::size_t i = 0; i < scan.bias_ma.size(); ++i) {
    os << detail::fmt_exact(scan.bias_ma[i]) << ","
       << detail::fmt_exact(scan.freq_ghz[i]) << "\n";
  }
  return os.str();
}

inline void write_arch_scan_file(const std::string& path,
                                 const ArchScan& scan) {
  if (scan.bias_ma.size() != scan.freq_ghz.size()) {
    throw DimensionMismatch("arch scan bias and frequency lengths differ");
  }
  atomic_write_text(path, arch_scan_text(scan));
}

inline ArchScan read_arch_scan_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  int line_no = 0;
  auto next_line = [&]() {
    if (!std::getline(in, line)) {
      throw IoError(path + ":" + std::to_string(line_no + 1) +
                    ": unexpected end of file");
    }
    ++line_no;
  };
  next_line();
  if (line != "# stf-archscan v1") {
    throw IoError(path + ":1: not an arch scan file (expected header "
                         "'# stf-archscan v1')");
  }
  ArchScan scan;
  next_line();
  if (line.rfind("# mutual_phi0_per_ma ", 0) != 0) {
    throw IoError(path + ":2: expected '# mutual_phi0_per_ma'");
  }
  scan.mutual_phi0_per_ma =
      detail::parse_double(line.substr(21), path + " mutual");
  next_line();
  if (line.rfind("# sigma_f_mhz ", 0) != 0) {
    throw IoError(path + ":3: expected '# sigma_f_mhz'");
  }
  scan.sigma_f_mhz = detail::parse_double(line.substr(14), path + " sigma");
  next_line();
  if (line != "bias_ma,freq_ghz") {
    throw IoError(path + ":4: expected column header 'bias_ma,freq_ghz'");
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> toks = detail::split_csv(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (toks.size() != 2) throw IoError(where + ": expected 2 columns");
    scan.bias_ma.push_back(detail::parse_double(toks[0], where));
    scan.freq_ghz.push_back(detail::parse_double(toks[1], where));
  }
  return scan;
}

struct T1Trace {
  std::vector<double> delay_us;
  std::vector<double> probability;
};

inline std::string t1_trace_text(const T1Trace& trace) {
  std::ostringstream os;
  os << "# stf-t1trace v1\n";
  os << "delay_us,probability\n";
  for (std::size_t i = 0; i < trace.delay_us.size(); ++i) {
    os << detail::fmt_exact(trace.delay_us[i]) << ","
       << detail::fmt_exact(trace.probability[i]) << "\n";
  }
  return os.str();
}

inline void write_t1_trace_file(const std::string& path, const T1Trace& trace) {
  if (trace.delay_us.size() != trace.probability.size()) {
    throw DimensionMismatch("t1 trace delay and probability lengths differ");
  }
  atomic_write_text(path, t1_trace_text(trace));
}

inline T1Trace read_t1_trace_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != "# stf-t1trace v1") {
    throw IoError(path + ":1: not a decay trace file (expected header "
                         "'# stf-t1trace v1')");
  }
  if (!std::getline(in, line) || line != "delay_us,probability") {
    throw IoError(path + ":2: expected column header 'delay_us,probability'");
  }
  T1Trace trace;
  int line_no = 2;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::vector<std::string> toks = detail::split_csv(line);
    const std::string where = path + ":" + std::to_string(line_no);
    if (toks.size() != 2) throw IoError(where + ": expected 2 columns");
    trace.delay_us.push_back(detail::parse_double(toks[0], where));
    trace.probability.push_back(detail::parse_double(toks[1], where));
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Report tables
// ---------------------------------------------------------------------------

inline constexpr const char* deviation_table_header =
    "qubit,cycle,delta_f01max_mhz,abs_delta_ibmax_phi0";
inline constexpr const char* t1_table_header =
    "qubit,cycle,session,mean_us,max_us";
inline constexpr const char* stf_table_header =
    "qubit,cycle_a,session_a,cycle_b,session_b,dt_hours,delta,rho,pearson,"
    "kind";

inline std::string deviation_table_text(
    const std::vector<DeviationRow>& rows) {
  std::ostringstream os;
  os << deviation_table_header << "\n";
  for (const DeviationRow& row : rows) {
    os << row.qubit << "," << row.cycle << ","
       << detail::fmt_g9(row.delta_f01max_mhz) << ","
       << detail::fmt_g9(row.abs_delta_ibmax_phi0) << "\n";
  }
  return os.str();
}

struct T1StatsRow {
  std::string qubit;
  int cycle = 1;
  int session = 1;
  double mean_us = 0.0;
  double max_us = 0.0;
};

inline std::vector<T1StatsRow> t1_stats_rows(const ExperimentRecord& record) {
  std::vector<T1StatsRow> rows;
  for (const QubitRecord& q : record.qubits) {
    for (const CycleRecord& c : q.cycles) {
      for (const SessionRecord& s : c.sessions) {
        if (s.missing) continue;
        rows.push_back(T1StatsRow{q.label, c.cycle, s.session,
                                  s.stats.mean_t1_us, s.stats.max_t1_us});
      }
    }
  }
  return rows;
}

inline std::string t1_table_text(const std::vector<T1StatsRow>& rows) {
  std::ostringstream os;
  os << t1_table_header << "\n";
  for (const T1StatsRow& row : rows) {
    os << row.qubit << "," << row.cycle << "," << row.session << ","
       << detail::fmt_g9(row.mean_us) << "," << detail::fmt_g9(row.max_us)
       << "\n";
  }
  return os.str();
}

inline std::string stf_table_text(const StfMatrix& matrix) {
  std::ostringstream os;
  os << stf_table_header << "\n";
  for (const StfReport& rep : matrix) {
    os << rep.qubit << "," << rep.cycle_a << "," << rep.session_a << ","
       << rep.cycle_b << "," << rep.session_b << ","
       << detail::fmt_g9(rep.dt_hours) << "," << detail::fmt_g9(rep.delta)
       << "," << detail::fmt_g9(rep.rho) << ","
       << detail::fmt_g9(rep.pearson) << "," << rep.kind << "\n";
  }
  return os.str();
}

namespace detail {

// Shared CSV-with-fixed-header reader; returns data rows split into fields.
inline std::vector<std::vector<std::string>> read_table(
    const std::string& path, const std::string& header,
    std::size_t n_columns) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "' for reading");
  std::string line;
  if (!std::getline(in, line) || line != header) {
    throw IoError(path + ":1: expected header '" + header + "'");
  }
  std::vector<std::vector<std::string>> rows;
  int line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> toks = split_csv(line);
    if (toks.size() != n_columns) {
      throw IoError(path + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(n_columns) + " columns, got " +
                    std::to_string(toks.size()));
    }
    rows.push_back(std::move(toks));
  }
  return rows;
}

}  // namespace detail

inline std::vector<DeviationRow> read_deviation_table(
    const std::string& path) {
  std::vector<DeviationRow> rows;
  for (const auto& toks :
       detail::read_table(path, deviation_table_header, 4)) {
    DeviationRow row;
    row.qubit = toks[0];
    row.cycle = detail::parse_int(toks[1], path + " cycle");
    row.delta_f01max_mhz = detail::parse_double(toks[2], path + " deviation");
    row.abs_delta_ibmax_phi0 =
        detail::parse_double(toks[3], path + " deviation");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::vector<T1StatsRow> read_t1_table(const std::string& path) {
  std::vector<T1StatsRow> rows;
  for (const auto& toks : detail::read_table(path, t1_table_header, 5)) {
    T1StatsRow row;
    row.qubit = toks[0];
    row.cycle = detail::parse_int(toks[1], path + " cycle");
    row.session = detail::parse_int(toks[2], path + " session");
    row.mean_us = detail::parse_double(toks[3], path + " mean_us");
    row.max_us = detail::parse_double(toks[4], path + " max_us");
    rows.push_back(std::move(row));
  }
  return rows;
}

inline StfMatrix read_stf_table(const std::string& path) {
  StfMatrix matrix;
  for (const auto& toks : detail::read_table(path, stf_table_header, 10)) {
    StfReport rep;
    rep.qubit = toks[0];
    rep.cycle_a = detail::parse_int(toks[1], path + " cycle_a");
    rep.session_a = detail::parse_int(toks[2], path + " session_a");
    rep.cycle_b = detail::parse_int(toks[3], path + " cycle_b");
    rep.session_b = detail::parse_int(toks[4], path + " session_b");
    rep.dt_hours = detail::parse_double(toks[5], path + " dt_hours");
    rep.delta = detail::parse_double(toks[6], path + " delta");
    rep.rho = detail::parse_double(toks[7], path + " rho");
    rep.pearson = detail::parse_double(toks[8], path + " pearson");
    rep.kind = toks[9];
    if (rep.kind != "intra" && rep.kind != "inter") {
      throw IoError(path + ": kind must be 'intra' or 'inter', got '" +
                    rep.kind + "'");
    }
    matrix.push_back(std::move(rep));
  }
  return matrix;
}

// ---------------------------------------------------------------------------
// Configuration document
// ---------------------------------------------------------------------------

// Parsed run configuration. qubit_count > 0 records that the qubit list was
// given as a fleet size and must be redrawn if the seed is overridden later;
// alpha == 0 requests noise-floor auto-calibration before scoring.
struct RunConfig {
  ExperimentPlan plan;
  double alpha = 0.0;
  double delta_floor = 0.0;
  int qubit_count = 0;
};

namespace detail {

// Tracks key consumption in one JSON object so that unknown keys are
// rejected with their full path.
class ConfigReader {
 public:
  ConfigReader(const nlohmann::json& node, std::string path)
      : node_(node), path_(std::move(path)) {
    if (!node_.is_object()) {
      throw ConfigError("config: '" + path_ + "' must be an object");
    }
  }

  bool has(const char* key) const { return node_.contains(key); }

  const nlohmann::json& require(const char* key) {
    if (!node_.contains(key)) {
      throw ConfigError("config: missing required key '" + at(key) + "'");
    }
    consumed_.insert(key);
    return node_.at(key);
  }

  const nlohmann::json* optional(const char* key) {
    if (!node_.contains(key)) return nullptr;
    consumed_.insert(key);
    return &node_.at(key);
  }

  double number_or(const char* key, double dflt) {
    const nlohmann::json* v = optional(key);
    if (v == nullptr) return dflt;
    if (!v->is_number()) {
      throw ConfigError("config: '" + at(key) + "' must be a number");
    }
    return v->get<double>();
  }

  int integer_or(const char* key, int dflt) {
    const nlohmann::json* v = optional(key);
    if (v == nullptr) return dflt;
    if (!v->is_number_integer()) {
      throw ConfigError("config: '" + at(key) + "' must be an integer");
    }
    return v->get<int>();
  }

  bool flag_or(const char* key, bool dflt) {
    const nlohmann::json* v = optional(key);
    if (v == nullptr) return dflt;
    if (!v->is_boolean()) {
      throw ConfigError("config: '" + at(key) + "' must be a boolean");
    }
    return v->get<bool>();
  }

  std::string text(const char* key) {
    const nlohmann::json& v = require(key);
    if (!v.is_string()) {
      throw ConfigError("config: '" + at(key) + "' must be a string");
    }
    return v.get<std::string>();
  }

  std::string at(const char* key) const {
    return path_.empty() ? std::string(key) : path_ + "." + key;
  }

  // Every key in the document must be consumed by a getter; anything else is
  // a misspelling or an unsupported knob and gets named precisely.
  void finish() const {
    for (const auto& item : node_.items()) {
      if (consumed_.count(item.key()) == 0) {
        throw ConfigError("config: unknown key '" + at(item.key().c_str()) +
                          "'");
      }
    }
  }

 private:
  const nlohmann::json& node_;
  std::string path_;
  std::set<std::string> consumed_;
};

inline std::vector<double> number_array(const nlohmann::json& v,
                                        const std::string& path) {
  if (!v.is_array()) {
    throw ConfigError("config: '" + path + "' must be an array of numbers");
  }
  std::vector<double> out;
  for (const auto& item : v) {
    if (!item.is_number()) {
      throw ConfigError("config: '" + path + "' must be an array of numbers");
    }
    out.push_back(item.get<double>());
  }
  return out;
}

}  // namespace detail

inline RunConfig parse_config(const nlohmann::json& doc) {
  detail::ConfigReader root(doc, "");
  RunConfig rc;
  ExperimentPlan& plan = rc.plan;

  {
    const nlohmann::json* seed = root.optional("seed");
    if (seed != nullptr) {
      if (seed->is_number_unsigned()) {
        plan.root_seed = seed->get<std::uint64_t>();
      } else if (seed->is_number_integer() &&
                 seed->get<std::int64_t>() >= 0) {
        plan.root_seed =
            static_cast<std::uint64_t>(seed->get<std::int64_t>());
      } else {
        throw ConfigError("config: 'seed' must be a non-negative integer");
      }
    }
  }

  {
    const nlohmann::json& qubits = root.require("qubits");
    if (qubits.is_number_integer()) {
      rc.qubit_count = qubits.get<int>();
      plan.qubits = draw_default_qubits(plan.root_seed, rc.qubit_count);
    } else if (qubits.is_array()) {
      if (qubits.empty()) {
        throw ConfigError("config: 'qubits' must list at least one qubit");
      }
      int index = 0;
      for (const auto& item : qubits) {
        detail::ConfigReader q(item,
                               "qubits[" + std::to_string(index) + "]");
        QubitConfig cfg;
        cfg.label = q.text("label");
        cfg.params.ej_ghz = q.number_or("ej_ghz", cfg.params.ej_ghz);
        cfg.params.ec_ghz = q.number_or("ec_ghz", cfg.params.ec_ghz);
        cfg.params.gamma0_per_us =
            q.number_or("gamma0_per_us", cfg.params.gamma0_per_us);
        cfg.flux_line.mutual_phi0_per_ma = q.number_or(
            "mutual_phi0_per_ma", cfg.flux_line.mutual_phi0_per_ma);
        cfg.flux_line.bias_offset_ma =
            q.number_or("bias_offset_ma", cfg.flux_line.bias_offset_ma);
        cfg.flux_line.flux_offset_phi0 =
            q.number_or("flux_offset_phi0", cfg.flux_line.flux_offset_phi0);
        q.finish();
        plan.qubits.push_back(std::move(cfg));
        ++index;
      }
    } else {
      throw ConfigError(
          "config: 'qubits' must be a fleet size or a list of qubit objects");
    }
  }

  {
    detail::ConfigReader cycles(root.require("cycles"), "cycles");
    plan.n_cycles = cycles.integer_or("count", plan.n_cycles);
    const nlohmann::json* hours = cycles.optional("session_hours");
    if (hours != nullptr) {
      plan.session_hours = detail::number_array(*hours,
                                                "cycles.session_hours");
    }
    plan.perturbation.sigma_f01_mhz =
        cycles.number_or("sigma_f01_mhz", plan.perturbation.sigma_f01_mhz);
    plan.perturbation.flux_offset_dist_phi0 = cycles.number_or(
        "flux_offset_dist_phi0", plan.perturbation.flux_offset_dist_phi0);
    plan.perturbation.reseed_tls =
        cycles.flag_or("reseed_tls", plan.perturbation.reseed_tls);
    plan.perturbation.reset_clock =
        cycles.flag_or("reset_clock", plan.perturbation.reset_clock);
    cycles.finish();
  }

  {
    detail::ConfigReader grid(root.require("grid"), "grid");
    const double f_lo = grid.number_or("freq_lo_ghz", 4.17);
    const double f_hi = grid.number_or("freq_hi_ghz", 4.47);
    const int n_f = grid.integer_or("n_freq", 101);
    const double d_lo = grid.number_or("delay_lo_us", 0.5);
    const double d_hi = grid.number_or("delay_hi_us", 150.0);
    const int n_d = grid.integer_or("n_delay", 51);
    grid.finish();
    plan.grid = make_grid(f_lo, f_hi, n_f, d_lo, d_hi, n_d);
  }

  {
    detail::ConfigReader readout(root.require("readout"), "readout");
    const int map_shots = readout.integer_or("map_shots", 100);
    const int t1_shots = readout.integer_or("t1_shots", 2000);
    const double contrast = readout.number_or("contrast", 0.9);
    const double floor = readout.number_or("floor", 0.03);
    const double cj = readout.number_or("contrast_jitter", 0.02);
    const double fj = readout.number_or("floor_jitter", 0.005);
    readout.finish();
    plan.map_readout = ReadoutModel{map_shots, contrast, floor, cj, fj};
    plan.t1_readout = ReadoutModel{t1_shots, contrast, floor, cj, fj};
  }

  {
    const nlohmann::json* node = root.optional("bath");
    if (node != nullptr) {
      detail::ConfigReader bath(*node, "bath");
      BathPrior& p = plan.bath_prior;
      p.window_lo_ghz = bath.number_or("window_lo_ghz", p.window_lo_ghz);
      p.window_hi_ghz = bath.number_or("window_hi_ghz", p.window_hi_ghz);
      p.density_per_mhz = bath.number_or("density_per_mhz", p.density_per_mhz);
      p.gamma_max_lo_per_us =
          bath.number_or("gamma_max_lo_per_us", p.gamma_max_lo_per_us);
      p.gamma_max_hi_per_us =
          bath.number_or("gamma_max_hi_per_us", p.gamma_max_hi_per_us);
      p.width_lo_mhz = bath.number_or("width_lo_mhz", p.width_lo_mhz);
      p.width_hi_mhz = bath.number_or("width_hi_mhz", p.width_hi_mhz);
      p.slow_per_defect = bath.integer_or("slow_per_defect", p.slow_per_defect);
      p.fast_per_defect = bath.integer_or("fast_per_defect", p.fast_per_defect);
      p.slow_rate_lo_per_hour =
          bath.number_or("slow_rate_lo_per_hour", p.slow_rate_lo_per_hour);
      p.slow_rate_hi_per_hour =
          bath.number_or("slow_rate_hi_per_hour", p.slow_rate_hi_per_hour);
      p.fast_rate_hi_per_hour =
          bath.number_or("fast_rate_hi_per_hour", p.fast_rate_hi_per_hour);
      p.slow_shift_lo_widths =
          bath.number_or("slow_shift_lo_widths", p.slow_shift_lo_widths);
      p.slow_shift_hi_widths =
          bath.number_or("slow_shift_hi_widths", p.slow_shift_hi_widths);
      p.fast_shift_widths =
          bath.number_or("fast_shift_widths", p.fast_shift_widths);
      bath.finish();
    }
  }

  {
    const nlohmann::json* node = root.optional("arch_scan");
    if (node != nullptr) {
      detail::ConfigReader arch(*node, "arch_scan");
      plan.arch_points = arch.integer_or("points", plan.arch_points);
      plan.arch_flux_span_phi0 =
          arch.number_or("flux_span_phi0", plan.arch_flux_span_phi0);
      plan.arch_sigma_f_mhz =
          arch.number_or("sigma_f_mhz", plan.arch_sigma_f_mhz);
      arch.finish();
    }
  }

  {
    const nlohmann::json* node = root.optional("analysis");
    if (node != nullptr) {
      detail::ConfigReader analysis(*node, "analysis");
      rc.alpha = analysis.number_or("alpha", 0.0);
      rc.delta_floor = analysis.number_or("delta_floor", 0.0);
      analysis.finish();
      if (rc.alpha < 0.0) {
        throw ConfigError("config: 'analysis.alpha' must be >= 0");
      }
      if (rc.delta_floor < 0.0) {
        throw ConfigError("config: 'analysis.delta_floor' must be >= 0");
      }
    }
  }

  root.finish();
  validate(plan);
  return rc;
}

inline RunConfig load_config(const std::string& path) {
  const std::string text = read_text_file(path);
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "': " + e.what());
  }
  return parse_config(doc);
}

// Reapply the seed after a command-line override. A count-mode fleet is
// redrawn because its fabrication spread derives from the root seed.
inline void override_seed(RunConfig& rc, std::uint64_t seed) {
  rc.plan.root_seed = seed;
  if (rc.qubit_count > 0) {
    rc.plan.qubits = draw_default_qubits(seed, rc.qubit_count);
  }
}

// ---------------------------------------------------------------------------
// Run manifest
// ---------------------------------------------------------------------------

inline constexpr const char* manifest_format_tag = "stabilitylab-run v1";
inline constexpr const char* manifest_filename = "run_manifest.json";

struct RunManifest {
  std::string format = manifest_format_tag;
  std::string tool_version = version;
  std::uint64_t seed = 0;
  std::string config_hash;
  double alpha = 0.0;
  std::map<std::string, std::string> files;
};

inline std::string manifest_text(const RunManifest& m) {
  nlohmann::json doc;
  doc["format"] = m.format;
  doc["version"] = m.tool_version;
  doc["seed"] = m.seed;
  doc["config_hash"] = m.config_hash;
  doc["alpha"] = m.alpha;
  doc["files"] = m.files;
  return doc.dump(2) + "\n";
}

inline RunManifest read_manifest(const std::string& path) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_text_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest '" + path + "': " + e.what());
  }
  if (!doc.is_object() || !doc.contains("format") ||
      !doc["format"].is_string() ||
      doc["format"].get<std::string>() != manifest_format_tag) {
    throw IoError("manifest '" + path + "': missing or unsupported format tag");
  }
  RunManifest m;
  try {
    m.tool_version = doc.at("version").get<std::string>();
    m.seed = doc.at("seed").get<std::uint64_t>();
    m.config_hash = doc.at("config_hash").get<std::string>();
    m.alpha = doc.at("alpha").get<double>();
    m.files =
        doc.at("files").get<std::map<std::string, std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw IoError("manifest '" + path + "': " + e.what());
  }
  return m;
}

// ---------------------------------------------------------------------------
// Run directory
// ---------------------------------------------------------------------------

// Writes every artifact of a finished run: one spectrogram file per complete
// session, the three report tables, and the manifest naming them all with
// content checksums. File order and content are deterministic.
inline RunManifest write_run_dir(const std::string& dir,
                                 const ExperimentRecord& record,
                                 const StfMatrix& matrix, double alpha_used,
                                 const std::string& config_hash) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(fs::path(dir) / "spectrograms", ec);
  if (ec) {
    throw IoError("cannot create run directory '" + dir + "': " +
                  ec.message());
  }

  RunManifest manifest;
  manifest.seed = record.root_seed;
  manifest.config_hash = config_hash;
  manifest.alpha = alpha_used;

  auto emit = [&](const std::string& rel, const std::string& content) {
    atomic_write_text((fs::path(dir) / rel).string(), content);
    manifest.files[rel] = fnv1a64_hex(content);
  };

  for (const QubitRecord& q : record.qubits) {
    for (const CycleRecord& c : q.cycles) {
      for (const SessionRecord& s : c.sessions) {
        if (s.missing) continue;
        const std::string rel = "spectrograms/" + q.label + "_c" +
                                std::to_string(c.cycle) + "_s" +
                                std::to_string(s.session) + ".csv";
        emit(rel, spectrogram_text(s.map));
      }
    }
  }
  emit("deviations.csv", deviation_table_text(record.deviations));
  emit("t1_stats.csv", t1_table_text(t1_stats_rows(record)));
  emit("stf.csv", stf_table_text(matrix));

  atomic_write_text((fs::path(dir) / manifest_filename).string(),
                    manifest_text(manifest));
  return manifest;
}

// ---------------------------------------------------------------------------
// Plot-ready report emission
// ---------------------------------------------------------------------------

// Rebuilds plot tables from a run directory. Requires a readable manifest;
// the decay summary is skipped (not an error) when the run is too small to
// bin, so tiny smoke runs still report.
inline std::vector<std::string> write_report_tables(
    const std::string& run_dir, const std::string& out_dir) {
  namespace fs = std::filesystem;
  read_manifest((fs::path(run_dir) / manifest_filename).string());

  const StfMatrix matrix =
      read_stf_table((fs::path(run_dir) / "stf.csv").string());
  const std::vector<DeviationRow> deviations =
      read_deviation_table((fs::path(run_dir) / "deviations.csv").string());
  const std::vector<T1StatsRow> t1_rows =
      read_t1_table((fs::path(run_dir) / "t1_stats.csv").string());

  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw IoError("cannot create report directory '" + out_dir + "': " +
                  ec.message());
  }

  std::vector<std::string> written;
  auto emit = [&](const std::string& name, const std::string& content) {
    atomic_write_text((fs::path(out_dir) / name).string(), content);
    written.push_back(name);
  };

  {
    std::ostringstream os;
    os << "kind,dt_hours,rho\n";
    double inter_sum = 0.0;
    std::size_t inter_n = 0;
    for (const StfReport& rep : matrix) {
      os << rep.kind << "," << detail::fmt_g9(rep.dt_hours) << ","
         << detail::fmt_g9(rep.rho) << "\n";
      if (rep.kind == "inter") {
        inter_sum += rep.rho;
        ++inter_n;
      }
    }
    os << "baseline,,"
       << detail::fmt_g9(inter_n ? inter_sum / double(inter_n)
                                 : std::numeric_limits<double>::quiet_NaN())
       << "\n";
    emit("stf_plot.csv", os.str());
  }

  try {
    const DecaySummary summary = summarize_decay(matrix);
    std::ostringstream os;
    os << "# slope_per_decade " << detail::fmt_g9(summary.slope_per_decade)
       << "\n";
    os << "# spearman_rho_vs_log_dt "
       << detail::fmt_g9(summary.spearman_rho_vs_log_dt) << "\n";
    os << "# inter_median_rho " << detail::fmt_g9(summary.inter_median_rho)
       << "\n";
    os << "# inter_mean_rho " << detail::fmt_g9(summary.inter_mean_rho)
       << "\n";
    os << "# n_intra " << summary.n_intra << "\n";
    os << "# n_inter " << summary.n_inter << "\n";
    os << "median_log10_dt,median_rho,n_pairs\n";
    for (const DecayBin& bin : summary.bins) {
      os << detail::fmt_g9(bin.median_log10_dt) << ","
         << detail::fmt_g9(bin.median_rho) << "," << bin.n_pairs << "\n";
    }
    emit("decay_summary.csv", os.str());
  } catch (const InsufficientSpan&) {
    // Too few intra-cycle pairs to bin; the other tables still stand.
  }

  emit("deviation_bars.csv", deviation_table_text(deviations));

  {
    std::ostringstream os;
    os << t1_table_header << "\n";
    for (const T1StatsRow& row : t1_rows) {
      os << row.qubit << "," << row.cycle << "," << row.session << ","
         << detail::fmt_g9(row.mean_us) << "," << detail::fmt_g9(row.max_us)
         << "\n";
    }
    emit("t1_bars.csv", os.str());
  }

  return written;
}

}  // namespace stabilitylab
