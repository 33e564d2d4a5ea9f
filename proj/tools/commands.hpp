#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rsclust/errors.hpp"

namespace rsclust::cli {

namespace fs = std::filesystem;

enum ExitCode : int {
  kOk = 0,
  kInputError = 2,
  kOptimizationFailure = 3,
  kResourceLimit = 4,
  kAcceptanceFailure = 5,
};

int exit_code(ErrorKind kind) noexcept;

struct FitArgs {
  fs::path data;
  fs::path out;
  std::optional<fs::path> init;
  std::uint64_t seed = 1;
  int starts = 5;
};

struct ChainSpec {
  std::string name;
  std::string kernel = "gibbs";
  int iters = 1000;
  std::uint64_t seed = 1;
  int gibbs_per_sm = 5;
  std::string init = "singletons";
};

struct FixtureSpec {
  double epsilon = 0.01;
  // Cross-island proposal probability per kernel name; see RunManifest.
  double trapped_cross = 1e-7;
  double mixing_cross = 0.05;
};

/// Everything `run` needs. Built from a JSON manifest or from flags.
///
/// In fixture mode no data are read: each chain simulates the two-island
/// chain started in the minor island. Kernel "gibbs" uses the trapped
/// cross-island proposal and "split-merge" the mixing one, standing in for
/// a local and a global sampler.
struct RunManifest {
  std::optional<fs::path> data;
  std::optional<FixtureSpec> fixture;
  std::string hyper = "fit";  // "fit" or a hyperparameter file path
  std::vector<ChainSpec> chains;
  std::vector<int> K{10};
  std::string delta = "most-visited";  // or a state key
  int check_every = 1000;
  double rho_min = 0.05;
  fs::path out_dir = "out";
  int threads = 1;

  /// Throws invalid_input if paths are missing, the K list is empty or
  /// settings are out of range.
  void validate() const;
};

/// Parses a manifest; relative paths resolve against the manifest's
/// directory.
RunManifest read_manifest(const fs::path& path);

struct ValidateArgs {
  int n = 5;
  std::uint64_t seed = 1;
  int iters = 1'000'000;
  bool allow_long = false;
  int threads = 1;
  std::optional<fs::path> out_dir;
};

struct ReportArgs {
  fs::path trace;
  std::vector<int> K{10};
  std::string delta = "most-visited";
  std::optional<fs::path> mass_table;
  fs::path out_dir = "report";
  double rho_min = 0.05;
};

struct SimulateArgs {
  std::optional<fs::path> hyper;
  std::vector<int> truth;
  int vars = 10;
  int reps = 2;
  std::uint64_t seed = 1;
  fs::path out;
};

struct EnumerateArgs {
  fs::path data;
  fs::path hyper;
  fs::path out;
  bool allow_long = false;
  int threads = 1;
};

int cmd_fit(const FitArgs& args, std::ostream& log);
int cmd_run(const RunManifest& manifest, std::ostream& log);
int cmd_validate(const ValidateArgs& args, std::ostream& log);
int cmd_report(const ReportArgs& args, std::ostream& log);
int cmd_simulate(const SimulateArgs& args, std::ostream& log);
int cmd_enumerate(const EnumerateArgs& args, std::ostream& log);

}  // namespace rsclust::cli
