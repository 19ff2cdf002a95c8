// SPDX-License-Identifier: Apache-2.0
//
// Batch front end: sweep, converge, mismatch, validate-config.
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include "robprec/io.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>

namespace fs = std::filesystem;
using namespace robprec;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Options {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::string algorithms;
  bool trace = false;
};

int exit_code_for(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumerical: return kExitNumerical;
    case ErrorKind::kConfig:
    case ErrorKind::kInvalidArgument: return kExitConfig;
  }
  return 1;
}

const char* kind_name(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kInvalidArgument: return "invalid_argument";
  }
  return "unknown";
}

/// Machine-readable error record on stderr and, once the arguments parsed,
/// in out_dir.
int fail(const Options& opt, const std::string& command, const char* kind, const std::string& message, int code) {
  const nlohmann::json rec{{"command", command}, {"error", kind}, {"message", message}, {"exit_code", code}};
  std::cerr << rec.dump() << '\n';
  std::error_code ec;
  if (!opt.out_dir.empty() && command != "validate-config" && command != "cli") {
    fs::create_directories(opt.out_dir, ec);
    if (!ec) {
      std::ofstream f(fs::path(opt.out_dir) / "error.json", std::ios::binary);
      f << rec.dump(2) << '\n';
    }
  }
  return code;
}

RunConfig resolve(const Options& opt) {
  RunConfig cfg = opt.config_path.empty() ? default_run_config() : load_config(opt.config_path);
  if (opt.seed) cfg.system.seed = *opt.seed;
  if (!opt.algorithms.empty()) cfg.plan.algorithms = parse_algorithm_list(opt.algorithms);
  cfg.validate();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw config_error("out-dir: cannot write '" + path.string() + "'");
  f << text;
}

/// DE-solver diagnostics: one row per fixed-point sweep.
class TraceSink {
 public:
  explicit TraceSink(const fs::path& path) : out_(path, std::ios::binary) { out_ << "solve,sweep,residual\n"; }
  void attach(RunConfig& cfg) {
    cfg.plan.mm.de.trace = [this](int sweep, double residual) {
      if (sweep == 1) ++solve_;
      out_ << solve_ << ',' << sweep << ',' << format_number(residual) << '\n';
    };
  }

 private:
  std::ofstream out_;
  long long solve_ = 0;
};

int run_command(const std::string& command, const Options& opt) {
  RunConfig cfg = resolve(opt);
  if (command == "validate-config") {
    std::cout << dump_config(cfg);
    return 0;
  }
  const fs::path dir(opt.out_dir);
  fs::create_directories(dir);
  std::unique_ptr<TraceSink> sink;
  std::vector<std::string> outputs;
  if (opt.trace) {
    sink = std::make_unique<TraceSink>(dir / "de_trace.csv");
    sink->attach(cfg);
    outputs.push_back("de_trace.csv");
  }

  if (command == "sweep") {
    const ExperimentResult all = sweep_snr(cfg.system, cfg.profile, cfg.plan, cfg.system.snr_db);
    for (Algorithm a : cfg.plan.algorithms) {
      ExperimentResult part;
      for (const auto& r : all.records)
        if (r.algorithm == algorithm_name(a)) part.records.push_back(r);
      const std::string name = "sweep_" + algorithm_name(a) + ".csv";
      std::ofstream f(dir / name, std::ios::binary);
      write_results_csv(f, part);
      outputs.push_back(name);
    }
    for (const auto& w : all.failures) std::cerr << "warning: skipped " << w << '\n';
  } else if (command == "converge") {
    const auto traces = convergence_study(cfg.system, cfg.profile, cfg.plan, cfg.convergence_snr_db);
    for (const auto& t : traces) {
      const std::string name = "converge_" + t.algorithm + ".csv";
      std::ofstream f(dir / name, std::ios::binary);
      write_report_csv(f, t.report);
      outputs.push_back(name);
    }
  } else if (command == "mismatch") {
    if (cfg.plan.assumed_alpha.empty()) throw config_error("experiment.assumed_alpha: empty list");
    const ExperimentResult res =
        alpha_mismatch_study(cfg.system, cfg.profile, cfg.plan, cfg.plan.assumed_alpha, cfg.mismatch_snr_db);
    std::ofstream f(dir / "mismatch.csv", std::ios::binary);
    write_results_csv(f, res);
    outputs.push_back("mismatch.csv");
    for (const auto& w : res.failures) std::cerr << "warning: skipped " << w << '\n';
  }
  write_text(dir / "manifest.json", make_manifest(cfg, command, outputs));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Robust downlink precoder experiments"};
  app.require_subcommand(1);
  Options opt;
  std::string command;

  auto add_common = [&](CLI::App* sub, bool runs) {
    sub->add_option("--config", opt.config_path, "JSON config or run manifest");
    sub->add_option("--seed", opt.seed, "Override system.seed");
    sub->add_option("--algorithms", opt.algorithms, "Comma list: alg1,alg2,alg3,rzf,slnr,wmmse,robust-rzf");
    if (runs) {
      sub->add_option("--out-dir", opt.out_dir, "Output directory")->capture_default_str();
      sub->add_flag("--trace", opt.trace, "Write DE-solver diagnostics to de_trace.csv");
    }
    sub->callback([&command, sub] { command = sub->get_name(); });
  };
  add_common(app.add_subcommand("sweep", "Sum-rate versus SNR"), true);
  add_common(app.add_subcommand("converge", "Per-iteration objective traces"), true);
  add_common(app.add_subcommand("mismatch", "Aging-coefficient mismatch study"), true);
  add_common(app.add_subcommand("validate-config", "Resolve and print a config"), false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return fail(opt, "cli", "config", e.what(), kExitConfig);
  }

  try {
    return run_command(command, opt);
  } catch (const Error& e) {
    return fail(opt, command, kind_name(e.kind()), e.what(), exit_code_for(e.kind()));
  } catch (const std::exception& e) {
    return fail(opt, command, "internal", e.what(), 1);
  }
}
