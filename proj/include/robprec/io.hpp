// SPDX-License-Identifier: Apache-2.0
//
// Run configuration (JSON), CSV writers, the binary matrix dump and the run
// manifest.

#pragma once

#include "robprec/beam_domain.hpp"
#include "robprec/evaluation.hpp"

#include <iosfwd>
#include <string>
#include <vector>

namespace robprec {

/// Everything a batch run needs besides the subcommand.
struct RunConfig {
  SystemConfig system;
  GeneratorProfile profile;
  ExperimentPlan plan;
  double convergence_snr_db = 10;
  double mismatch_snr_db = 20;

  /// Throws Error(kConfig) naming the offending key.
  void validate() const;
};

/// M_t = 16, K = 4, M_k = d_k = 2, N_b = 7, P = 1, w = 1, SNR {0, 10, 20} dB.
RunConfig default_run_config();

/// Parses a JSON config. Missing keys keep their defaults; unknown or
/// duplicate keys are errors. A run manifest is accepted as well and its
/// embedded config is used.
RunConfig parse_config_text(const std::string& text);
RunConfig load_config(const std::string& path);

/// Fully resolved config as JSON; parse_config_text(dump_config(c)) == c.
std::string dump_config(const RunConfig& cfg);

/// 64-bit FNV-1a of a string, as 16 hex digits.
std::string fnv1a_hex(const std::string& text);

/// %.12g with '.' as the decimal separator.
std::string format_number(double value);

void write_results_csv(std::ostream& os, const ExperimentResult& result);
/// Columns iteration, de_objective, mu, power. Row 0 is the initial iterate.
void write_report_csv(std::ostream& os, const MMReport& report);
/// Same columns with a leading algorithm column.
void write_traces_csv(std::ostream& os, const std::vector<ConvergenceTrace>& traces);
/// Columns user, beam, power.
void write_beam_allocation_csv(std::ostream& os, const BeamAllocation<double>& alloc);

/// Row-major, each row as re,im,re,im,...
void write_matrix_csv(std::ostream& os, const CMatrixd& m);

struct NamedMatrix {
  std::string name;
  CMatrixd value;
};

/// Binary dump: "RPMD", u32 version, u32 count, then per matrix
/// u32 name length, name bytes, u64 rows, u64 cols and rows*cols (re, im)
/// little-endian doubles in row-major order.
void write_matrix_dump(std::ostream& os, const std::vector<NamedMatrix>& matrices);
std::vector<NamedMatrix> read_matrix_dump(std::istream& is);

/// Manifest of one CLI run; reloadable through load_config.
std::string make_manifest(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& outputs);

}  // namespace robprec
