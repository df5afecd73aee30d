#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "bnpc/commensurability.hpp"
#include "bnpc/harmonic.hpp"

namespace bnpc::cli {

inline constexpr const char* kSchema = "bnpc-run/1";

/// Exit status of the command-line tool.
enum ExitCode : int { kSuccess = 0, kCheckFailed = 1, kInvalidInput = 2, kSolverFailed = 3 };

/// Malformed or inconsistent run configuration. The message names the offending field.
class ConfigError : public DomainError {
 public:
  using DomainError::DomainError;
};

enum class Method { Minimize, NormMinimal, Lexicographic, Gamma0 };

struct SolverConfig {
  Method method = Method::Minimize;
  SolverOptions options;
  std::vector<double> schedule = default_schedule();
  std::vector<int> class_order;
  /// "base", "random" or "values".
  std::string init = "base";
  double init_radius = 1.0;
  std::vector<Point> init_values;
  std::optional<std::uint64_t> seed;
};

struct VerifyConfig {
  int samples = 1000;
  std::optional<std::uint64_t> seed;
};

/// Everything a run needs, validated.
struct RunConfig {
  Space space = Space::euclidean(1);
  std::optional<EquivariantProblem> problem;
  /// Set for dihedral-cover and for explicit problems with a cover block.
  std::optional<CoverSpec> cover;
  /// Generator name, empty for explicit problems.
  std::string generator;
  SolverConfig solver;
  VerifyConfig verify;
  std::filesystem::path out_dir = "out";
};

/// Parses a JSON run configuration. Unknown fields, missing required fields and
/// invalid spaces or problems raise ConfigError.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

/// Command-line values that take precedence over the file.
struct Overrides {
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
};
void apply(RunConfig& cfg, const Overrides& o);

/// Writes trace.csv, solution.csv and summary.json under cfg.out_dir.
/// Throws ConfigError for unusable input; solver failures propagate.
SolveReport solve(const RunConfig& cfg, std::ostream& log);

struct CheckResult {
  std::string suite;
  std::string name;
  bool passed = false;
  bool skipped = false;
  /// Distance to the failure threshold at the worst sample; negative on failure.
  double worst_slack = 0.0;
  std::string detail;
  /// JSON text of the failing sample, empty when none.
  std::string witness;
};

const std::vector<std::string>& suite_names();

/// Runs one suite, or every suite for "all". Throws ConfigError for unknown suites,
/// missing seeds and spaces the suite cannot use.
std::vector<CheckResult> run_suite(const RunConfig& cfg, const std::string& suite);

/// Runs the suite and writes report.json (and witness.json on failure) under cfg.out_dir.
/// Returns kSuccess iff every check that ran passed.
int verify(const RunConfig& cfg, const std::string& suite, std::ostream& log);

/// Full command line: `solve <config>` or `verify <config> --suite <name>`, with
/// --out, --seed and --threads. Maps errors to exit codes.
int main(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace bnpc::cli
