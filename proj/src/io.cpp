// SPDX-License-Identifier: Apache-2.0

#include "robprec/io.hpp"

#include <json.hpp>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

namespace robprec {

using nlohmann::json;

namespace {

constexpr const char* kToolVersion = "0.1.0";

json to_json(const RunConfig& c) {
  const auto& s = c.system;
  const auto& p = c.profile;
  const auto& e = c.plan;
  json algorithms = json::array();
  for (Algorithm a : e.algorithms) algorithms.push_back(algorithm_name(a));
  return json{
      {"system",
       {{"num_tx", s.num_tx},
        {"num_users", s.num_users},
        {"rx_antennas", s.rx_antennas},
        {"streams", s.streams},
        {"blocks_per_slot", s.blocks_per_slot},
        {"block_length", s.block_length},
        {"total_power", s.total_power},
        {"weights", s.weights},
        {"sigma2_z", s.sigma2_z},
        {"sigma2_bs", s.sigma2_bs},
        {"tie_uplink_noise", s.tie_uplink_noise},
        {"snr_db", s.snr_db},
        {"seed", s.seed}}},
      {"profile",
       {{"band_width", p.band_width},
        {"band_start", p.band_start},
        {"decay_db_per_beam", p.decay_db_per_beam},
        {"lognormal_sigma_db", p.lognormal_sigma_db},
        {"alpha", p.alpha}}},
      {"experiment",
       {{"slots", e.slots},
        {"mc_samples", e.mc_samples},
        {"algorithms", algorithms},
        {"iterations", e.mm.iterations},
        {"early_exit_rel", e.mm.early_exit_rel},
        {"tol_power", e.mm.tol_power},
        {"max_halvings", e.mm.max_halvings},
        {"de_tol", e.mm.de.tol},
        {"de_max_iter", e.mm.de.max_iter},
        {"de_damping", e.mm.de.damping},
        {"init", e.init == InitPolicy::kRzf ? "rzf" : "random"},
        {"alg3_iterations", e.alg3_iterations},
        {"wmmse_iterations", e.wmmse_iterations},
        {"robust_load_scale", e.robust_load_scale},
        {"assumed_alpha", e.assumed_alpha},
        {"convergence_block", e.convergence_block},
        {"convergence_iterations", e.convergence_iterations},
        {"convergence_snr_db", c.convergence_snr_db},
        {"mismatch_snr_db", c.mismatch_snr_db}}}};
}

/// Typed reads that name the key on failure.
class Section {
 public:
  Section(const json& j, std::string name, std::set<std::string> allowed) : j_(j), name_(std::move(name)) {
    if (!j_.is_object()) throw config_error(name_ + ": expected an object");
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!allowed.count(it.key())) throw config_error(name_ + "." + it.key() + ": unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void read(const char* key, int& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_integer()) throw config_error(path(key) + ": expected an integer");
    out = v.get<int>();
  }
  void read(const char* key, std::uint64_t& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
      throw config_error(path(key) + ": expected a nonnegative integer");
    out = v.get<std::uint64_t>();
  }
  void read(const char* key, double& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_number()) throw config_error(path(key) + ": expected a number");
    out = v.get<double>();
  }
  void read(const char* key, bool& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_boolean()) throw config_error(path(key) + ": expected true or false");
    out = v.get<bool>();
  }
  void read(const char* key, std::string& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_string()) throw config_error(path(key) + ": expected a string");
    out = v.get<std::string>();
  }
  template <typename T>
  void read(const char* key, std::vector<T>& out) const {
    if (!has(key)) return;
    const json& v = j_.at(key);
    if (!v.is_array()) throw config_error(path(key) + ": expected an array");
    out.clear();
    for (const auto& item : v) {
      if constexpr (std::is_same_v<T, int>) {
        if (!item.is_number_integer()) throw config_error(path(key) + ": expected integers");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!item.is_number()) throw config_error(path(key) + ": expected numbers");
      } else {
        if (!item.is_string()) throw config_error(path(key) + ": expected strings");
      }
      out.push_back(item.get<T>());
    }
  }

 private:
  std::string path(const char* key) const { return name_ + "." + key; }
  const json& j_;
  std::string name_;
};

json parse_strict(const std::string& text) {
  // The callback sees every key; a stack of key sets catches repeats per object.
  std::vector<std::set<std::string>> open;
  std::string duplicate;
  json::parser_callback_t cb = [&](int, json::parse_event_t event, json& parsed) {
    switch (event) {
      case json::parse_event_t::object_start:
        open.emplace_back();
        break;
      case json::parse_event_t::object_end:
        if (!open.empty()) open.pop_back();
        break;
      case json::parse_event_t::key: {
        const std::string key = parsed.get<std::string>();
        if (!open.empty() && !open.back().insert(key).second && duplicate.empty()) duplicate = key;
        break;
      }
      default:
        break;
    }
    return true;
  };
  json j;
  try {
    j = json::parse(text, cb);
  } catch (const json::parse_error& e) {
    throw config_error(std::string("config: malformed JSON: ") + e.what());
  }
  if (!duplicate.empty()) throw config_error(duplicate + ": duplicate key");
  return j;
}

}  // namespace

void RunConfig::validate() const {
  system.validate();
  profile.validate(system);
  if (plan.slots < 1) throw config_error("experiment.slots: must be >= 1");
  if (plan.mc_samples < 1) throw config_error("experiment.mc_samples: must be >= 1");
  if (plan.algorithms.empty()) throw config_error("experiment.algorithms: empty list");
  if (plan.mm.iterations < 0) throw config_error("experiment.iterations: must be >= 0");
  if (!(plan.mm.tol_power > 0 && plan.mm.tol_power < 1)) throw config_error("experiment.tol_power: must lie in (0, 1)");
  if (plan.mm.max_halvings < 1) throw config_error("experiment.max_halvings: must be >= 1");
  if (!(plan.mm.de.tol > 0)) throw config_error("experiment.de_tol: must be > 0");
  if (plan.mm.de.max_iter < 1) throw config_error("experiment.de_max_iter: must be >= 1");
  if (!(plan.mm.de.damping > 0 && plan.mm.de.damping <= 1))
    throw config_error("experiment.de_damping: must lie in (0, 1]");
  if (plan.alg3_iterations < 0) throw config_error("experiment.alg3_iterations: must be >= 0");
  if (plan.wmmse_iterations < 0) throw config_error("experiment.wmmse_iterations: must be >= 0");
  if (!(plan.robust_load_scale >= 0)) throw config_error("experiment.robust_load_scale: must be >= 0");
  for (double a : plan.assumed_alpha)
    if (!(a >= 0 && a <= 1)) throw config_error("experiment.assumed_alpha: entries must lie in [0, 1]");
  if (plan.convergence_block < 2 || plan.convergence_block > system.blocks_per_slot)
    throw config_error("experiment.convergence_block: must lie in 2..blocks_per_slot");
  if (plan.convergence_iterations < 1) throw config_error("experiment.convergence_iterations: must be >= 1");
}

RunConfig default_run_config() {
  RunConfig c;
  c.system = SystemConfig::uniform(16, 4, 2, 7);
  c.system.snr_db = {0.0, 10.0, 20.0};
  c.system = c.system.at_snr(10.0);
  c.profile = GeneratorProfile::uniform(4, 6, 0.9);
  c.plan.assumed_alpha = {0.0, 0.5, 0.8, 0.9, 1.0};
  return c;
}

RunConfig parse_config_text(const std::string& text) {
  json root = parse_strict(text);
  if (root.is_object() && root.contains("manifest_version")) {
    if (!root.contains("config")) throw config_error("config: manifest without embedded config");
    root = root.at("config");
  }
  Section top(root, "config", {"system", "profile", "experiment"});
  RunConfig c = default_run_config();

  if (top.has("system")) {
    Section s(root.at("system"), "system",
              {"num_tx", "num_users", "rx_antennas", "streams", "blocks_per_slot", "block_length", "total_power",
               "weights", "sigma2_z", "sigma2_bs", "tie_uplink_noise", "snr_db", "seed"});
    auto& sys = c.system;
    s.read("num_tx", sys.num_tx);
    s.read("num_users", sys.num_users);
    // Per-user arrays that are not given follow the user count.
    const int k = sys.num_users;
    if (k < 1) throw config_error("system.num_users: must be >= 1");
    sys.rx_antennas.assign(k, 2);
    s.read("rx_antennas", sys.rx_antennas);
    sys.streams = sys.rx_antennas;
    s.read("streams", sys.streams);
    sys.weights.assign(k, 1.0);
    s.read("weights", sys.weights);
    sys.block_length = sys.total_rx();
    s.read("block_length", sys.block_length);
    s.read("blocks_per_slot", sys.blocks_per_slot);
    s.read("total_power", sys.total_power);
    s.read("tie_uplink_noise", sys.tie_uplink_noise);
    s.read("sigma2_z", sys.sigma2_z);
    if (sys.tie_uplink_noise) sys.sigma2_bs = sys.sigma2_z;
    s.read("sigma2_bs", sys.sigma2_bs);
    s.read("snr_db", sys.snr_db);
    s.read("seed", sys.seed);
    if (int(c.profile.band_width.size()) != k) {
      c.profile.band_width.assign(k, std::min(6, std::max(1, sys.num_tx)));
      c.profile.band_start.assign(k, -1);
      c.profile.alpha.assign(k, 0.9);
    }
  }
  if (top.has("profile")) {
    Section p(root.at("profile"), "profile",
              {"band_width", "band_start", "decay_db_per_beam", "lognormal_sigma_db", "alpha"});
    auto& prof = c.profile;
    p.read("band_width", prof.band_width);
    p.read("band_start", prof.band_start);
    p.read("decay_db_per_beam", prof.decay_db_per_beam);
    p.read("lognormal_sigma_db", prof.lognormal_sigma_db);
    p.read("alpha", prof.alpha);
  }
  if (top.has("experiment")) {
    Section e(root.at("experiment"), "experiment",
              {"slots", "mc_samples", "algorithms", "iterations", "early_exit_rel", "tol_power", "max_halvings",
               "de_tol", "de_max_iter", "de_damping", "init", "alg3_iterations", "wmmse_iterations",
               "robust_load_scale", "assumed_alpha", "convergence_block", "convergence_iterations",
               "convergence_snr_db", "mismatch_snr_db"});
    auto& plan = c.plan;
    e.read("slots", plan.slots);
    e.read("mc_samples", plan.mc_samples);
    if (e.has("algorithms")) {
      std::vector<std::string> names;
      e.read("algorithms", names);
      plan.algorithms.clear();
      for (const auto& n : names) plan.algorithms.push_back(parse_algorithm(n));
    }
    e.read("iterations", plan.mm.iterations);
    e.read("early_exit_rel", plan.mm.early_exit_rel);
    e.read("tol_power", plan.mm.tol_power);
    e.read("max_halvings", plan.mm.max_halvings);
    e.read("de_tol", plan.mm.de.tol);
    e.read("de_max_iter", plan.mm.de.max_iter);
    e.read("de_damping", plan.mm.de.damping);
    std::string init = plan.init == InitPolicy::kRzf ? "rzf" : "random";
    e.read("init", init);
    if (init == "rzf") {
      plan.init = InitPolicy::kRzf;
    } else if (init == "random") {
      plan.init = InitPolicy::kRandom;
    } else {
      throw config_error("experiment.init: expected \"random\" or \"rzf\"");
    }
    e.read("alg3_iterations", plan.alg3_iterations);
    e.read("wmmse_iterations", plan.wmmse_iterations);
    e.read("robust_load_scale", plan.robust_load_scale);
    e.read("assumed_alpha", plan.assumed_alpha);
    e.read("convergence_block", plan.convergence_block);
    e.read("convergence_iterations", plan.convergence_iterations);
    e.read("convergence_snr_db", c.convergence_snr_db);
    e.read("mismatch_snr_db", c.mismatch_snr_db);
  }
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("config: cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string dump_config(const RunConfig& cfg) { return to_json(cfg).dump(2) + "\n"; }

std::string fnv1a_hex(const std::string& text) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 1099511628211ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_number(double value) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", value);
  return buf;
}

void write_results_csv(std::ostream& os, const ExperimentResult& result) {
  bool mismatch = false;
  for (const auto& r : result.records) mismatch = mismatch || r.assumed_alpha.has_value();
  os << "snr_db,algorithm,slot,block,sum_rate,stderr,seed" << (mismatch ? ",assumed_alpha" : "") << '\n';
  for (const auto& r : result.records) {
    os << format_number(r.snr_db) << ',' << r.algorithm << ',' << r.slot << ',' << r.block << ','
       << format_number(r.sum_rate) << ',' << format_number(r.std_error) << ',' << r.seed;
    if (mismatch) os << ',' << (r.assumed_alpha ? format_number(*r.assumed_alpha) : "");
    os << '\n';
  }
}

namespace {
void report_rows(std::ostream& os, const MMReport& report, const std::string& prefix) {
  for (std::size_t i = 0; i < report.objective.size(); ++i) {
    os << prefix << i << ',' << format_number(report.objective[i]) << ',';
    if (i > 0 && i - 1 < report.mu.size()) os << format_number(report.mu[i - 1]);
    os << ',';
    if (i > 0 && i - 1 < report.power.size()) os << format_number(report.power[i - 1]);
    os << '\n';
  }
}
}  // namespace

void write_report_csv(std::ostream& os, const MMReport& report) {
  os << "iteration,de_objective,mu,power\n";
  report_rows(os, report, "");
}

void write_traces_csv(std::ostream& os, const std::vector<ConvergenceTrace>& traces) {
  os << "algorithm,iteration,de_objective,mu,power\n";
  for (const auto& t : traces) report_rows(os, t.report, t.algorithm + ",");
}

void write_beam_allocation_csv(std::ostream& os, const BeamAllocation<double>& alloc) {
  os << "user,beam,power\n";
  for (std::size_t k = 0; k < alloc.num_users(); ++k)
    for (Eigen::Index j = 0; j < alloc.amplitude[k].size(); ++j)
      os << k << ',' << alloc.order[k][j] << ',' << format_number(alloc.amplitude[k](j) * alloc.amplitude[k](j))
         << '\n';
}

void write_matrix_csv(std::ostream& os, const CMatrixd& m) {
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (j > 0) os << ',';
      os << format_number(m(i, j).real()) << ',' << format_number(m(i, j).imag());
    }
    os << '\n';
  }
}

namespace {

static_assert(std::endian::native == std::endian::little, "matrix dump assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw invalid_argument("matrix dump: truncated input");
  return v;
}

constexpr char kMagic[4] = {'R', 'P', 'M', 'D'};
constexpr std::uint32_t kDumpVersion = 1;

}  // namespace

void write_matrix_dump(std::ostream& os, const std::vector<NamedMatrix>& matrices) {
  os.write(kMagic, 4);
  put<std::uint32_t>(os, kDumpVersion);
  put<std::uint32_t>(os, std::uint32_t(matrices.size()));
  for (const auto& m : matrices) {
    put<std::uint32_t>(os, std::uint32_t(m.name.size()));
    os.write(m.name.data(), std::streamsize(m.name.size()));
    put<std::uint64_t>(os, std::uint64_t(m.value.rows()));
    put<std::uint64_t>(os, std::uint64_t(m.value.cols()));
    for (Eigen::Index i = 0; i < m.value.rows(); ++i)
      for (Eigen::Index j = 0; j < m.value.cols(); ++j) {
        put<double>(os, m.value(i, j).real());
        put<double>(os, m.value(i, j).imag());
      }
  }
}

std::vector<NamedMatrix> read_matrix_dump(std::istream& is) {
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMagic, 4) != 0) throw invalid_argument("matrix dump: bad magic");
  if (get<std::uint32_t>(is) != kDumpVersion) throw invalid_argument("matrix dump: unsupported version");
  const auto count = get<std::uint32_t>(is);
  std::vector<NamedMatrix> out;
  for (std::uint32_t c = 0; c < count; ++c) {
    NamedMatrix m;
    m.name.resize(get<std::uint32_t>(is));
    is.read(m.name.data(), std::streamsize(m.name.size()));
    const auto rows = get<std::uint64_t>(is);
    const auto cols = get<std::uint64_t>(is);
    m.value.resize(Eigen::Index(rows), Eigen::Index(cols));
    for (std::uint64_t i = 0; i < rows; ++i)
      for (std::uint64_t j = 0; j < cols; ++j) {
        const double re = get<double>(is);
        const double im = get<double>(is);
        m.value(Eigen::Index(i), Eigen::Index(j)) = {re, im};
      }
    out.push_back(std::move(m));
  }
  return out;
}

std::string make_manifest(const RunConfig& cfg, const std::string& command, const std::vector<std::string>& outputs) {
  json algorithms = json::array();
  for (Algorithm a : cfg.plan.algorithms) algorithms.push_back(algorithm_name(a));
  const json config = to_json(cfg);
  json m{{"manifest_version", 1},
         {"tool", "robprec"},
         {"tool_version", kToolVersion},
         {"command", command},
         {"seed", cfg.system.seed},
         {"algorithms", algorithms},
         {"outputs", outputs},
         {"config_hash", fnv1a_hex(config.dump())},
         {"config", config}};
  return m.dump(2) + "\n";
}

}  // namespace robprec
