#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "tiltline/oracle.hpp"
#include "tiltline/sampler.hpp"
#include "tiltline/stats.hpp"

namespace tiltline::experiments {

using json = nlohmann::json;

inline constexpr const char* kVersion = "tiltline 1.0.0";
inline constexpr int kCsvSchema = 1;

/// Validated experiment configuration. `doc` holds the full normalized
/// document (defaults filled in), which is also its serialization.
struct ExperimentConfig {
  json doc;

  std::string kind() const { return doc.at("kind").get<std::string>(); }
  std::uint64_t seed() const { return doc.at("seed").get<std::uint64_t>(); }
  std::string output() const { return doc.at("output").get<std::string>(); }
  std::size_t workers() const { return doc.at("workers").get<std::size_t>(); }
  const json& params() const { return doc.at("params"); }

  SamplerConfig sampler() const;
  std::vector<Observable> observables() const;
  OracleOptions oracle() const;

  /// Hash of every setting except seed, output and workers.
  std::uint64_t hash() const;
  std::string dump() const { return doc.dump(2); }
};

/// The schema with every default; unknown keys anywhere are rejected.
const json& default_document();
const std::vector<std::string>& experiment_kinds();

/// Strict parse: ConfigError on unknown keys, wrong types or bad values.
ExperimentConfig parse_config(const json& doc);
ExperimentConfig load_config(const std::string& path);

/// Applies KEY=VALUE with a dotted key; VALUE is read as JSON when it
/// parses, otherwise as a string.
void apply_override(json& doc, const std::string& assignment);

/// Sampler section fields that define the target measure.
json measure_of(const json& sampler_section);
SamplerConfig sampler_from_json(const json& sampler_section, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Artifacts

/// Shortest round-trip decimal representation.
std::string format_double(double v);

/// UTF-8 CSV; an optional "# ..." preamble line precedes the header.
struct CsvTable {
  std::string preamble;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row) { rows.push_back(std::move(row)); }
  void write(std::ostream& out) const;
  void save(const std::string& path) const;
  static CsvTable load(const std::string& path);
  std::size_t column(const std::string& name) const;
};

struct PlotSeries {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
  bool dashed = false;
};

struct Plot {
  std::string title;
  std::string x_label;
  std::string y_label;
  bool log_x = false;
  bool log_y = false;
  std::vector<PlotSeries> series;

  std::string svg() const;
  void save(const std::string& path) const;
};

struct Gate {
  std::string name;
  double estimate = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  double threshold = 0.0;
  bool passed = false;
  std::string detail;
};

CsvTable gates_table(const std::vector<Gate>& gates);

// ---------------------------------------------------------------------------
// Running

enum ExitCode { kPass = 0, kGateFailure = 1, kConfigError = 2, kCostGuard = 3, kIoError = 4 };

/// I/O failure while reading or writing artifacts.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::optional<std::string> resume;
};

struct RunReport {
  std::string output_dir;
  std::vector<Gate> gates;
  bool passed() const;
};

/// Executes one experiment and writes its artifacts.
RunReport run_experiment(const ExperimentConfig& config,
                         const std::optional<std::string>& resume = std::nullopt,
                         std::ostream* log = nullptr);

/// Loads, overrides and runs; returns the exit status.
int run(const RunOptions& options, std::ostream& log, std::ostream& err);

/// KS comparison of two run directories (sampler or oracle each).
RunReport compare_runs(const std::string& a_dir, const std::string& b_dir,
                       const std::optional<std::string>& out_dir, double threshold,
                       std::ostream* log = nullptr);
int compare(const std::string& a_dir, const std::string& b_dir,
            const std::optional<std::string>& out_dir, double threshold, std::ostream& log,
            std::ostream& err);

/// Maps the in-flight exception to an exit code and prints its message.
int exit_code_for_current_exception(std::ostream& err);

// ---------------------------------------------------------------------------
// Acceptance suite

struct AcceptanceOptions {
  std::uint64_t seed = 20240611;
  std::size_t workers = 1;
  std::string scratch_dir = "acceptance_scratch";
};

struct Criterion {
  int number;
  std::string title;
  std::function<Gate(const AcceptanceOptions&)> run;
};

const std::vector<Criterion>& acceptance_criteria();

/// Runs the selected criteria (all when empty); `on_gate` sees each result.
std::vector<Gate> run_acceptance(const AcceptanceOptions& options,
                                 const std::vector<int>& selected = {},
                                 const std::function<void(int, const Gate&)>& on_gate = {});

/// "[PASS] 1 name: estimate ... threshold ..." summary line.
std::string format_gate_line(int number, const Gate& gate);

}  // namespace tiltline::experiments
