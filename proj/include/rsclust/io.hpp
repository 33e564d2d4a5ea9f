#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "rsclust/consensus.hpp"
#include "rsclust/diagnostics.hpp"
#include "rsclust/model.hpp"
#include "rsclust/oracle.hpp"
#include "rsclust/regen.hpp"
#include "rsclust/trace.hpp"

namespace rsclust {

namespace fs = std::filesystem;

/// Writes through a temporary file in the same directory, then renames.
void write_file_atomic(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);

/// Doubles are written with 17 significant digits so they read back
/// bit-exactly.
std::string format_double(double x);
double parse_double(const std::string& text, const std::string& where);

// Data: header "id,<variable names>", then one row per replicate. Rows with
// the same id form one observation; observations are numbered by first
// appearance. Parse errors carry the line number.
DataMatrix parse_data_csv(std::istream& in, const std::string& source = "<input>");
DataMatrix read_data_csv(const fs::path& path);
std::string format_data_csv(const DataMatrix& data);
void write_data_csv(const fs::path& path, const DataMatrix& data);

// Hyperparameters: "name=value" lines with the five names; optional
// "name_se=value" lines carry standard errors. '#' starts a comment.
struct HyperFile {
  HyperParams hyper;
  std::optional<HyperParams> standard_errors;
};
HyperFile parse_hyper(std::istream& in, const std::string& source = "<input>");
HyperFile read_hyper(const fs::path& path);
std::string format_hyper(const HyperParams& hyper, const HyperParams* se = nullptr);
void write_hyper(const fs::path& path, const HyperParams& hyper,
                 const HyperParams* se = nullptr);

// Trace: "# key=value" meta lines, then "iteration,state,log_post".
Trace parse_trace(std::istream& in, const std::string& source = "<input>");
Trace read_trace(const fs::path& path);
void write_trace(const fs::path& path, const Trace& trace);

// Mass table: "# log_Z=value", then "state,log_mass".
MassTable read_mass_table(const fs::path& path);
void write_mass_table(const fs::path& path, const MassTable& table);

// Fixture: header "state,island,pi,<state keys>", one row of P per state.
// island is -1 for fixtures without islands. Without a pi column the
// stationary vector is recomputed.
ChainFixture read_fixture(const fs::path& path);
void write_fixture(const fs::path& path, const ChainFixture& fixture);

// Consensus: square CSV with observation ids as row and column headers.
std::string format_matrix_csv(const Eigen::MatrixXd& m, const std::vector<std::string>& ids);
Eigen::MatrixXd read_matrix_csv(const fs::path& path, std::vector<std::string>* ids = nullptr);
void write_consensus(const fs::path& dir, const std::string& stem,
                     const ConsensusMatrix& consensus, const std::vector<std::string>& ids);
/// Pairs i < j with rho_ij > rho_min, sorted by decreasing rho.
void write_consensus_pairs(const fs::path& path, const ConsensusMatrix& consensus,
                           const std::vector<std::string>& ids, double rho_min);

// Tours: "r,tau_r,N_r" with r = 0..R (N_0 left empty).
void write_tours(const fs::path& path, const Tours& tours);

/// Flat JSON record of a diagnostic result.
std::string diagnostic_json(const DiagnosticResult& result, int indent = 2);

}  // namespace rsclust
