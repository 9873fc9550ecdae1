#pragma once

// Configured experiment runs: dataset generation, hazard training, value and
// policy evaluation, the MLE scaling sweep, and the chained end-to-end run.
//
// Output layout under RunConfig::out_dir:
//   manifest.json, dataset.bin, trajectories.bin, generate_metrics.{jsonl,csv}
//   <estimator>/model.ckpt, model.json, loss.csv, train_metrics.{jsonl,csv}
//   <estimator>/policy.ckpt, evaluation.json, eval_metrics.{jsonl,csv}
//   scaling.csv, scaling.json, scaling_metrics.{jsonl,csv}
//   comparison.json (end2end with compare_estimators)

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "svl/checkpoint.hpp"
#include "svl/dataset_io.hpp"
#include "svl/hsvl.hpp"
#include "svl/trainer.hpp"

namespace svl {

namespace fs = std::filesystem;

/// Bad or unknown configuration; maps to the usage exit code.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { kTabular, kLowRank };
enum class PolicyKind { kFlat, kHier };

struct RunConfig {
  // [run]
  std::uint64_t seed = 1;
  std::string out_dir = "svl_out";
  std::string maze;
  Estimator estimator = Estimator::kPcs;
  bool compare_estimators = false;
  // [env]
  double slip = 0.1;
  double gamma = 0.99;
  double behavior_optimal = 0.8;
  // [data]
  std::size_t tuples = 100000;
  std::size_t trajectory_length = 60;
  RelabelConfig relabel;
  double holdout_fraction = 0.1;
  // [hazard]
  ModelKind model = ModelKind::kTabular;
  std::size_t bins = 16;
  std::int64_t horizon = 128;
  std::size_t net_width = 64;
  std::size_t net_depth = 2;
  std::size_t net_basis = 4;
  std::size_t net_rank = 8;
  // [train]
  TrainConfig train{1024, 3000, 0.05, 0, 500, 1};
  // [policy]
  PolicyKind policy = PolicyKind::kFlat;
  AwrConfig awr;
  // [eval]
  std::size_t episodes = 10000;
  std::int64_t budget_multiple = 4;
  // [scaling]
  std::vector<std::size_t> scaling_sizes{100, 1000, 10000, 100000};
  std::size_t scaling_replicates = 200;
  double scaling_hazard = 0.2;
  double scaling_censoring = 0.3;

  void validate() const;
  bool operator==(const RunConfig&) const = default;
};

namespace detail {

inline std::string format_double(double v) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

template <class T>
T parse_number(const std::string& text) {
  T value{};
  const auto* end = text.data() + text.size();
  const auto res = std::from_chars(text.data(), end, value);
  if (res.ec != std::errc() || res.ptr != end) throw ConfigError("not a number: '" + text + "'");
  return value;
}

inline void parse_into(const std::string& v, std::string& out) { out = v; }
inline void parse_into(const std::string& v, double& out) { out = parse_number<double>(v); }
inline void parse_into(const std::string& v, std::uint64_t& out) { out = parse_number<std::uint64_t>(v); }
inline void parse_into(const std::string& v, std::int64_t& out) { out = parse_number<std::int64_t>(v); }
inline void parse_into(const std::string& v, bool& out) {
  if (v == "true") {
    out = true;
  } else if (v == "false") {
    out = false;
  } else {
    throw ConfigError("expected true or false, got '" + v + "'");
  }
}
inline void parse_into(const std::string& v, Estimator& out) {
  try {
    out = parse_estimator(v);
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}
inline void parse_into(const std::string& v, ModelKind& out) {
  if (v == "tabular") {
    out = ModelKind::kTabular;
  } else if (v == "lowrank") {
    out = ModelKind::kLowRank;
  } else {
    throw ConfigError("model must be tabular or lowrank, got '" + v + "'");
  }
}
inline void parse_into(const std::string& v, PolicyKind& out) {
  if (v == "flat") {
    out = PolicyKind::kFlat;
  } else if (v == "hier") {
    out = PolicyKind::kHier;
  } else {
    throw ConfigError("policy must be flat or hier, got '" + v + "'");
  }
}
inline void parse_into(const std::string& v, std::vector<std::size_t>& out) {
  out.clear();
  std::size_t start = 0;
  while (start <= v.size()) {
    const auto comma = std::min(v.find(',', start), v.size());
    out.push_back(parse_number<std::size_t>(v.substr(start, comma - start)));
    start = comma + 1;
  }
}

inline std::string format_value(const std::string& v) { return v; }
inline std::string format_value(double v) { return format_double(v); }
inline std::string format_value(std::uint64_t v) { return std::to_string(v); }
inline std::string format_value(std::int64_t v) { return std::to_string(v); }
inline std::string format_value(bool v) { return v ? "true" : "false"; }
inline std::string format_value(Estimator v) { return to_string(v); }
inline std::string format_value(ModelKind v) { return v == ModelKind::kTabular ? "tabular" : "lowrank"; }
inline std::string format_value(PolicyKind v) { return v == PolicyKind::kFlat ? "flat" : "hier"; }
inline std::string format_value(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

struct ConfigField {
  const char* section;
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <class Access>
ConfigField field(const char* section, const char* key, Access access) {
  return {section, key,
          [access](RunConfig& c, const std::string& v) { parse_into(v, access(c)); },
          [access](const RunConfig& c) { return format_value(access(c)); }};
}

inline const std::vector<ConfigField>& config_fields() {
  static const std::vector<ConfigField> fields = {
      field("run", "seed", [](auto& c) -> auto& { return c.seed; }),
      field("run", "out_dir", [](auto& c) -> auto& { return c.out_dir; }),
      field("run", "maze", [](auto& c) -> auto& { return c.maze; }),
      field("run", "estimator", [](auto& c) -> auto& { return c.estimator; }),
      field("run", "compare_estimators", [](auto& c) -> auto& { return c.compare_estimators; }),
      field("env", "slip", [](auto& c) -> auto& { return c.slip; }),
      field("env", "gamma", [](auto& c) -> auto& { return c.gamma; }),
      field("env", "behavior_optimal", [](auto& c) -> auto& { return c.behavior_optimal; }),
      field("data", "tuples", [](auto& c) -> auto& { return c.tuples; }),
      field("data", "trajectory_length", [](auto& c) -> auto& { return c.trajectory_length; }),
      field("data", "p_cur", [](auto& c) -> auto& { return c.relabel.p_cur; }),
      field("data", "p_traj", [](auto& c) -> auto& { return c.relabel.p_traj; }),
      field("data", "p_rand", [](auto& c) -> auto& { return c.relabel.p_rand; }),
      field("data", "holdout_fraction", [](auto& c) -> auto& { return c.holdout_fraction; }),
      field("hazard", "model", [](auto& c) -> auto& { return c.model; }),
      field("hazard", "bins", [](auto& c) -> auto& { return c.bins; }),
      field("hazard", "horizon", [](auto& c) -> auto& { return c.horizon; }),
      field("hazard", "width", [](auto& c) -> auto& { return c.net_width; }),
      field("hazard", "depth", [](auto& c) -> auto& { return c.net_depth; }),
      field("hazard", "basis_sets", [](auto& c) -> auto& { return c.net_basis; }),
      field("hazard", "rank", [](auto& c) -> auto& { return c.net_rank; }),
      field("train", "steps", [](auto& c) -> auto& { return c.train.total_steps; }),
      field("train", "batch_size", [](auto& c) -> auto& { return c.train.batch_size; }),
      field("train", "learning_rate", [](auto& c) -> auto& { return c.train.learning_rate; }),
      field("train", "eval_every", [](auto& c) -> auto& { return c.train.eval_every; }),
      field("train", "workers", [](auto& c) -> auto& { return c.train.workers; }),
      field("policy", "kind", [](auto& c) -> auto& { return c.policy; }),
      field("policy", "beta", [](auto& c) -> auto& { return c.awr.beta; }),
      field("policy", "subgoal_step", [](auto& c) -> auto& { return c.awr.subgoal_step; }),
      field("policy", "weight_clip", [](auto& c) -> auto& { return c.awr.weight_clip; }),
      field("eval", "episodes", [](auto& c) -> auto& { return c.episodes; }),
      field("eval", "budget_multiple", [](auto& c) -> auto& { return c.budget_multiple; }),
      field("scaling", "sizes", [](auto& c) -> auto& { return c.scaling_sizes; }),
      field("scaling", "replicates", [](auto& c) -> auto& { return c.scaling_replicates; }),
      field("scaling", "hazard", [](auto& c) -> auto& { return c.scaling_hazard; }),
      field("scaling", "censoring", [](auto& c) -> auto& { return c.scaling_censoring; }),
  };
  return fields;
}

}  // namespace detail

inline void RunConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError(what); };
  if (!(slip >= 0.0 && slip <= 1.0)) fail("env.slip must lie in [0,1]");
  if (!(gamma > 0.0 && gamma < 1.0)) fail("env.gamma must lie in (0,1)");
  if (!(behavior_optimal >= 0.0 && behavior_optimal <= 1.0)) fail("env.behavior_optimal must lie in [0,1]");
  if (tuples == 0) fail("data.tuples must be positive");
  if (trajectory_length == 0) fail("data.trajectory_length must be positive");
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) fail("data.holdout_fraction must lie in [0,1)");
  if (bins == 0 || horizon < static_cast<std::int64_t>(bins)) fail("hazard.horizon must be >= hazard.bins >= 1");
  if (net_width == 0 || net_depth == 0 || net_basis == 0 || net_rank == 0) fail("network sizes must be positive");
  if (episodes == 0) fail("eval.episodes must be positive");
  if (budget_multiple < 1) fail("eval.budget_multiple must be >= 1");
  if (scaling_sizes.empty() || scaling_replicates == 0) fail("scaling sweep is empty");
  for (auto n : scaling_sizes) {
    if (n == 0) fail("scaling sizes must be positive");
  }
  if (!(scaling_hazard > 0.0 && scaling_hazard < 1.0)) fail("scaling.hazard must lie in (0,1)");
  if (!(scaling_censoring >= 0.0 && scaling_censoring < 1.0)) fail("scaling.censoring must lie in [0,1)");
  try {
    relabel.validate();
    train.validate();
    awr.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

/// Parses "[section]" / "key = value" text on top of the defaults. Unknown
/// sections or keys are errors.
inline RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream is(text);
  try {
    pt::read_ini(is, tree);
  } catch (const pt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  RunConfig cfg;
  const auto& fields = detail::config_fields();
  for (const auto& [section, body] : tree) {
    if (body.empty() && !body.data().empty()) {
      throw ConfigError("config key '" + section + "' outside a section");
    }
    if (std::none_of(fields.begin(), fields.end(), [&](const auto& f) { return f.section == section; })) {
      throw ConfigError("unknown config section [" + section + "]");
    }
    for (const auto& [key, value] : body) {
      const auto it = std::find_if(fields.begin(), fields.end(), [&](const auto& f) {
        return f.section == section && f.key == key;
      });
      if (it == fields.end()) throw ConfigError("unknown config key " + section + "." + key);
      try {
        it->set(cfg, value.data());
      } catch (const ConfigError& e) {
        throw ConfigError(section + "." + key + ": " + e.what());
      }
    }
  }
  cfg.validate();
  return cfg;
}

inline std::string serialize_config(const RunConfig& cfg) {
  std::string out;
  std::string section;
  for (const auto& f : detail::config_fields()) {
    if (f.section != section) {
      if (!section.empty()) out += '\n';
      section = f.section;
      out += "[" + section + "]\n";
    }
    out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  }
  return out;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw ConfigError("cannot open config " + path.string());
  std::ostringstream text;
  text << is.rdbuf();
  try {
    return parse_config(text.str());
  } catch (const ConfigError& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsRecord {
  std::string run_id;
  std::string phase;
  std::size_t step = 0;
  std::vector<std::pair<std::string, double>> metrics;
};

/// Append-only records; steps are non-decreasing within a phase.
class MetricsLog {
 public:
  explicit MetricsLog(std::string run_id) : run_id_(std::move(run_id)) {}

  void add(const std::string& phase, std::size_t step,
           std::vector<std::pair<std::string, double>> metrics) {
    if (const auto it = last_step_.find(phase); it != last_step_.end() && step < it->second) {
      throw std::logic_error("metrics step went backwards in phase " + phase);
    }
    last_step_[phase] = step;
    records_.push_back({run_id_, phase, step, std::move(metrics)});
  }

  const std::vector<MetricsRecord>& records() const { return records_; }

  void write_jsonl(std::ostream& os) const {
    for (const auto& r : records_) {
      nlohmann::ordered_json j;
      j["run_id"] = r.run_id;
      j["phase"] = r.phase;
      j["step"] = r.step;
      auto& m = j["metrics"] = nlohmann::ordered_json::object();
      for (const auto& [name, value] : r.metrics) m[name] = value;
      os << j.dump() << '\n';
    }
  }

  void write_csv(std::ostream& os) const {
    os << "run_id,phase,step,metric,value\n";
    for (const auto& r : records_) {
      for (const auto& [name, value] : r.metrics) {
        os << r.run_id << ',' << r.phase << ',' << r.step << ',' << name << ','
           << detail::format_double(value) << '\n';
      }
    }
  }

  /// Writes <stem>.jsonl and <stem>.csv.
  void save(const fs::path& stem) const;

 private:
  std::string run_id_;
  std::vector<MetricsRecord> records_;
  std::map<std::string, std::size_t> last_step_;
};

namespace detail {

inline void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  os << bytes;
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  std::ostringstream text;
  text << is.rdbuf();
  return text.str();
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// splitmix64 finaliser: independent seeds for each phase of a run.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

enum SeedStream : std::uint64_t { kDataStream = 1, kTrainStream = 2, kEvalStream = 3, kScalingStream = 4 };

}  // namespace detail

inline void MetricsLog::save(const fs::path& stem) const {
  std::ostringstream jsonl, csv;
  write_jsonl(jsonl);
  write_csv(csv);
  detail::write_file(stem.string() + ".jsonl", jsonl.str());
  detail::write_file(stem.string() + ".csv", csv.str());
}

// ---------------------------------------------------------------------------
// Shared pieces

struct Environment {
  std::string maze_text;
  GridMdp mdp;
  TabularPolicy behavior;
};

inline Environment load_environment(const RunConfig& cfg) {
  if (cfg.maze.empty()) throw ConfigError("no maze given (run.maze or --maze)");
  auto text = detail::read_file(cfg.maze);
  Maze maze;
  try {
    maze = parse_maze(text);
  } catch (const MazeParseError& e) {
    throw std::runtime_error(cfg.maze + ": " + e.what());
  }
  GridMdp mdp(std::move(maze), cfg.slip);
  auto behavior = TabularPolicy::noisy_optimal(mdp, cfg.behavior_optimal);
  return {std::move(text), std::move(mdp), std::move(behavior)};
}

/// Run identifier: fingerprint of the configuration minus its output directory.
inline std::string run_id(const RunConfig& cfg, const std::string& maze_text) {
  RunConfig c = cfg;
  c.out_dir.clear();
  c.maze.clear();
  return "run-" + detail::hex64(io::fnv1a(serialize_config(c) + maze_text));
}

inline BinSpec estimator_bins(const RunConfig& cfg, Estimator e) {
  return e == Estimator::kFinite ? uniform_edges(cfg.horizon) : geometric_edges(cfg.bins, cfg.horizon);
}

inline fs::path model_dir(const RunConfig& cfg, Estimator e) { return fs::path(cfg.out_dir) / to_string(e); }

// ---------------------------------------------------------------------------
// generate

struct GenerateSummary {
  std::size_t trajectories = 0;
  std::size_t tuples = 0;
  std::size_t events = 0;
  std::string maze_hash;
};

/// Behaviour trajectories from uniformly drawn start/commanded-goal pairs,
/// hindsight-relabeled until exactly cfg.tuples tuples exist.
inline GenerateSummary cmd_generate(const RunConfig& cfg) {
  cfg.validate();
  const auto env = load_environment(cfg);
  const auto& mdp = env.mdp;
  std::mt19937_64 rng(detail::derive_seed(cfg.seed, detail::kDataStream));
  std::uniform_int_distribution<StateId> pick(0, static_cast<StateId>(mdp.num_states() - 1));
  std::vector<GoalId> pool(mdp.num_goals());
  for (std::size_t g = 0; g < pool.size(); ++g) pool[g] = static_cast<GoalId>(g);

  std::vector<Trajectory> trajectories;
  std::vector<SurvivalTuple> tuples;
  tuples.reserve(cfg.tuples);
  while (tuples.size() < cfg.tuples) {
    const StateId start = pick(rng);
    const GoalId commanded = pick(rng);
    auto traj = walk(mdp, env.behavior, start, commanded,
                     static_cast<std::int64_t>(cfg.trajectory_length), rng);
    const auto batch = relabel(traj, cfg.relabel, kNoHorizonCap, rng, pool);
    const auto take = std::min(batch.size(), cfg.tuples - tuples.size());
    tuples.insert(tuples.end(), batch.begin(), batch.begin() + static_cast<std::ptrdiff_t>(take));
    trajectories.push_back(std::move(traj));
  }

  GenerateSummary summary;
  summary.trajectories = trajectories.size();
  summary.tuples = tuples.size();
  for (const auto& t : tuples) summary.events += t.delta;
  summary.maze_hash = detail::hex64(io::fnv1a(env.maze_text));

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  save_dataset_binary((out / "dataset.bin").string(), tuples);
  save_trajectories((out / "trajectories.bin").string(), trajectories);

  nlohmann::ordered_json manifest;
  manifest["run_id"] = run_id(cfg, env.maze_text);
  manifest["seed"] = cfg.seed;
  manifest["maze_hash"] = summary.maze_hash;
  manifest["states"] = mdp.num_states();
  manifest["trajectories"] = summary.trajectories;
  manifest["transitions"] = summary.trajectories * cfg.trajectory_length;
  manifest["tuples"] = summary.tuples;
  manifest["events"] = summary.events;
  manifest["censored"] = summary.tuples - summary.events;
  detail::write_file(out / "manifest.json", manifest.dump(2) + "\n");

  MetricsLog log(run_id(cfg, env.maze_text));
  log.add("generate", 0,
          {{"trajectories", static_cast<double>(summary.trajectories)},
           {"tuples", static_cast<double>(summary.tuples)},
           {"event_fraction", static_cast<double>(summary.events) / static_cast<double>(summary.tuples)}});
  log.save(out / "generate_metrics");
  return summary;
}

// ---------------------------------------------------------------------------
// train

struct TrainSummary {
  std::vector<LossRow> trace;
  std::size_t train_tuples = 0;
  std::size_t holdout_tuples = 0;
};

namespace detail {

inline LowRankConfig net_config(const RunConfig& cfg, std::size_t bins) {
  LowRankConfig net;
  net.input_dim = 4;
  net.width = cfg.net_width;
  net.depth = cfg.net_depth;
  net.basis_sets = cfg.net_basis;
  net.rank = cfg.net_rank;
  net.bins = bins;
  return net;
}

template <class Fn>
decltype(auto) with_model(ModelKind kind, const Checkpoint& ckpt, const GridMdp& mdp, Fn&& fn) {
  if (kind == ModelKind::kTabular) return fn(tabular_from_checkpoint(ckpt));
  auto net = lowrank_from_checkpoint(ckpt);
  net.set_features(mdp.features());
  return fn(net);
}

}  // namespace detail

inline TrainSummary cmd_train(const RunConfig& cfg, Estimator e) {
  cfg.validate();
  const auto env = load_environment(cfg);
  const fs::path out(cfg.out_dir);
  auto data = load_dataset((out / "dataset.bin").string());
  for (auto& t : data) t = censor_at_horizon(t, cfg.horizon);
  const auto holdout_n = static_cast<std::size_t>(cfg.holdout_fraction * static_cast<double>(data.size()));
  const std::span<const SurvivalTuple> all(data);
  const auto train_set = all.first(data.size() - holdout_n);
  const auto holdout_set = all.last(holdout_n);
  if (train_set.empty()) throw std::runtime_error("no training tuples after the holdout split");

  const auto spec = estimator_bins(cfg, e);
  TrainConfig tc = cfg.train;
  tc.seed = detail::derive_seed(cfg.seed, detail::kTrainStream);
  const auto S = env.mdp.num_states();
  const auto G = env.mdp.num_goals();

  FitResult fit;
  Checkpoint ckpt;
  if (cfg.model == ModelKind::kTabular) {
    TabularHazard model(S, G, spec.bins());
    fit = fit_hazard(model, train_set, spec, training_likelihood(e), tc, holdout_set);
    ckpt = to_checkpoint(model);
  } else {
    LowRankHazardNet net(detail::net_config(cfg, spec.bins()));
    std::mt19937_64 init(tc.seed);
    net.initialize(init);
    net.set_features(env.mdp.features());
    fit = fit_hazard(net, train_set, spec, training_likelihood(e), tc, holdout_set);
    ckpt = to_checkpoint(net);
  }

  const auto dir = model_dir(cfg, e);
  fs::create_directories(dir);
  save_checkpoint(dir / "model.ckpt", ckpt);
  nlohmann::ordered_json sidecar;
  sidecar["estimator"] = to_string(e);
  sidecar["model"] = detail::format_value(cfg.model);
  sidecar["gamma"] = cfg.gamma;
  sidecar["edges"] = spec.edges();
  detail::write_file(dir / "model.json", sidecar.dump(2) + "\n");
  std::ostringstream loss;
  write_loss_csv(loss, fit.trace);
  detail::write_file(dir / "loss.csv", loss.str());

  MetricsLog log(run_id(cfg, env.maze_text));
  for (const auto& row : fit.trace) {
    std::vector<std::pair<std::string, double>> m = {{"train_nll", row.train_nll}};
    if (!std::isnan(row.holdout_nll)) m.emplace_back("holdout_nll", row.holdout_nll);
    log.add("train", row.step, std::move(m));
  }
  log.save(dir / "train_metrics");
  return {std::move(fit.trace), train_set.size(), holdout_set.size()};
}

// ---------------------------------------------------------------------------
// evaluate

struct EvalSummary {
  Estimator estimator = Estimator::kPcs;
  double mean_relative_error = 0.0;
  double max_relative_error = 0.0;
  double mean_absolute_error = 0.0;
  double behavior_success = 0.0;
  double policy_success = 0.0;
  std::size_t episodes = 0;
};

struct LoadedModel {
  Checkpoint checkpoint;
  ModelKind kind = ModelKind::kTabular;
  BinSpec spec;
  double gamma = 0.0;
};

inline LoadedModel load_model(const RunConfig& cfg, Estimator e) {
  const auto dir = model_dir(cfg, e);
  LoadedModel m;
  m.checkpoint = load_checkpoint(dir / "model.ckpt");
  const auto sidecar_path = dir / "model.json";
  try {
    const auto j = nlohmann::json::parse(detail::read_file(sidecar_path));
    if (j.at("estimator").get<std::string>() != to_string(e)) {
      throw std::runtime_error("sidecar estimator does not match");
    }
    detail::parse_into(j.at("model").get<std::string>(), m.kind);
    m.spec = BinSpec(j.at("edges").get<std::vector<std::int64_t>>());
    m.gamma = j.at("gamma").get<double>();
  } catch (const nlohmann::json::exception& ex) {
    throw std::runtime_error(sidecar_path.string() + ": " + ex.what());
  }
  const auto expected = m.kind == ModelKind::kTabular ? CheckpointKind::kTabularHazard
                                                      : CheckpointKind::kLowRankHazard;
  if (m.checkpoint.kind != expected) {
    throw std::runtime_error(dir.string() + ": checkpoint kind does not match model.json");
  }
  return m;
}

/// Plug-in value table of a trained checkpoint.
inline ValueTable learned_values(const RunConfig& cfg, const GridMdp& mdp, Estimator e) {
  const auto m = load_model(cfg, e);
  const auto bins = m.checkpoint.shape.back();
  if (bins != m.spec.bins()) throw std::runtime_error("checkpoint bins do not match model.json edges");
  if (m.kind == ModelKind::kTabular &&
      (m.checkpoint.shape[0] != mdp.num_states() || m.checkpoint.shape[1] != mdp.num_goals())) {
    throw std::runtime_error("checkpoint was trained on a different maze");
  }
  return detail::with_model(m.kind, m.checkpoint, mdp, [&](const auto& model) {
    return model_value_table(model, mdp.num_states(), mdp.num_goals(), m.spec, Discount(m.gamma), e);
  });
}

struct ValueErrors {
  double mean_relative = 0.0;
  double max_relative = 0.0;
  double mean_absolute = 0.0;
  std::size_t pairs = 0;
};

/// Errors over every (state, goal) pair with a non-zero oracle value.
inline ValueErrors value_errors(const ValueTable& estimate, const ValueTable& oracle) {
  ValueErrors out;
  const auto est = estimate.values();
  const auto ref = oracle.values();
  for (std::size_t i = 0; i < ref.size(); ++i) {
    if (std::abs(ref[i]) < 1e-12) continue;
    const double abs_err = std::abs(est[i] - ref[i]);
    const double rel = abs_err / std::abs(ref[i]);
    out.mean_relative += rel;
    out.mean_absolute += abs_err;
    out.max_relative = std::max(out.max_relative, rel);
    ++out.pairs;
  }
  if (out.pairs > 0) {
    out.mean_relative /= static_cast<double>(out.pairs);
    out.mean_absolute /= static_cast<double>(out.pairs);
  }
  return out;
}

inline EvalSummary cmd_evaluate(const RunConfig& cfg, Estimator e) {
  cfg.validate();
  const auto env = load_environment(cfg);
  const auto& mdp = env.mdp;
  const fs::path out(cfg.out_dir);
  const auto values = learned_values(cfg, mdp, e);
  const auto oracle = oracle_value_table(mdp, env.behavior, Discount(cfg.gamma));
  const auto errors = value_errors(values, oracle);
  const auto trajectories = load_trajectories((out / "trajectories.bin").string());

  const auto seed = detail::derive_seed(cfg.seed, detail::kEvalStream);
  const auto behavior =
      evaluate_success(mdp, cfg.episodes, seed, flat_actor(env.behavior, false), cfg.budget_multiple);
  SuccessRate extracted;
  Checkpoint policy_ckpt;
  if (cfg.policy == PolicyKind::kFlat) {
    const auto pi = fit_flat_policy(trajectories, values, cfg.awr);
    extracted = evaluate_success(mdp, cfg.episodes, seed, flat_actor(pi, true), cfg.budget_multiple);
    policy_ckpt = to_checkpoint(pi);
  } else {
    const auto pi = fit_hier_policy(trajectories, values, cfg.awr);
    extracted = evaluate_success(mdp, cfg.episodes, seed, hier_actor(pi, true), cfg.budget_multiple);
    policy_ckpt = to_checkpoint(pi);
  }

  EvalSummary summary;
  summary.estimator = e;
  summary.mean_relative_error = errors.mean_relative;
  summary.max_relative_error = errors.max_relative;
  summary.mean_absolute_error = errors.mean_absolute;
  summary.behavior_success = behavior.rate();
  summary.policy_success = extracted.rate();
  summary.episodes = cfg.episodes;

  const auto dir = model_dir(cfg, e);
  save_checkpoint(dir / "policy.ckpt", policy_ckpt);
  nlohmann::ordered_json report;
  report["estimator"] = to_string(e);
  report["value_pairs"] = errors.pairs;
  report["mean_relative_value_error"] = errors.mean_relative;
  report["max_relative_value_error"] = errors.max_relative;
  report["mean_absolute_value_error"] = errors.mean_absolute;
  report["policy"] = detail::format_value(cfg.policy);
  report["episodes"] = cfg.episodes;
  report["behavior_success"] = summary.behavior_success;
  report["policy_success"] = summary.policy_success;
  detail::write_file(dir / "evaluation.json", report.dump(2) + "\n");

  MetricsLog log(run_id(cfg, env.maze_text));
  log.add("evaluate", 0,
          {{"mean_relative_value_error", errors.mean_relative},
           {"max_relative_value_error", errors.max_relative},
           {"mean_absolute_value_error", errors.mean_absolute},
           {"behavior_success", summary.behavior_success},
           {"policy_success", summary.policy_success}});
  log.save(dir / "eval_metrics");
  return summary;
}

// ---------------------------------------------------------------------------
// scaling

struct ScalingRow {
  std::size_t n = 0;
  double error = 0.0;          // mean |h_hat - h| over replicates
  double ignored_error = 0.0;  // same, censored tuples dropped
};

struct ScalingSummary {
  std::vector<ScalingRow> rows;
  double slope = 0.0;
  double ignored_slope = 0.0;
  double censored_fraction = 0.0;
};

namespace detail {

inline double loglog_slope(const std::vector<ScalingRow>& rows, bool ignored) {
  double mx = 0, my = 0;
  for (const auto& r : rows) {
    mx += std::log(static_cast<double>(r.n));
    my += std::log(ignored ? r.ignored_error : r.error);
  }
  mx /= static_cast<double>(rows.size());
  my /= static_cast<double>(rows.size());
  double sxy = 0, sxx = 0;
  for (const auto& r : rows) {
    const double dx = std::log(static_cast<double>(r.n)) - mx;
    sxy += dx * (std::log(ignored ? r.ignored_error : r.error) - my);
    sxx += dx * dx;
  }
  return sxx > 0 ? sxy / sxx : std::nan("");
}

}  // namespace detail

/// Geometric event hazard whose censoring hazard gives the requested
/// censored fraction: P(C < T) = hc (1 - h) / (h + hc (1 - h)).
inline double censoring_hazard_for(double h, double censored_fraction) {
  if (censored_fraction <= 0.0) return 0.0;
  return censored_fraction * h / ((1.0 - censored_fraction) * (1.0 - h));
}

inline ScalingSummary cmd_scaling(const RunConfig& cfg) {
  cfg.validate();
  const double h = cfg.scaling_hazard;
  const double hc = censoring_hazard_for(h, cfg.scaling_censoring);
  if (hc >= 1.0) throw ConfigError("censoring fraction unreachable for this hazard");
  std::mt19937_64 rng(detail::derive_seed(cfg.seed, detail::kScalingStream));
  std::geometric_distribution<std::int64_t> event_time(h);
  std::optional<std::geometric_distribution<std::int64_t>> censor_time;
  if (hc > 0.0) censor_time.emplace(hc);

  ScalingSummary summary;
  std::size_t censored = 0, total = 0;
  std::vector<SurvivalTuple> data, events_only;
  for (const auto n : cfg.scaling_sizes) {
    ScalingRow row;
    row.n = n;
    for (std::size_t r = 0; r < cfg.scaling_replicates; ++r) {
      data.clear();
      events_only.clear();
      for (std::size_t i = 0; i < n; ++i) {
        const std::int64_t t = event_time(rng);
        const std::int64_t c = censor_time ? (*censor_time)(rng) : std::numeric_limits<std::int32_t>::max();
        if (t <= c) {
          data.push_back(SurvivalTuple::event(0, 0, t, c));
          events_only.push_back(data.back());
        } else {
          data.push_back(SurvivalTuple::censored(0, 0, c));
          ++censored;
        }
      }
      total += n;
      row.error += std::abs(constant_hazard_mle(data) - h);
      row.ignored_error += events_only.empty() ? 1.0 : std::abs(constant_hazard_mle(events_only) - h);
    }
    row.error /= static_cast<double>(cfg.scaling_replicates);
    row.ignored_error /= static_cast<double>(cfg.scaling_replicates);
    summary.rows.push_back(row);
  }
  summary.slope = detail::loglog_slope(summary.rows, false);
  summary.ignored_slope = detail::loglog_slope(summary.rows, true);
  summary.censored_fraction = static_cast<double>(censored) / static_cast<double>(total);

  fs::create_directories(cfg.out_dir);
  const fs::path out(cfg.out_dir);
  std::ostringstream csv;
  csv << "n,error,ignored_error\n";
  for (const auto& r : summary.rows) {
    csv << r.n << ',' << detail::format_double(r.error) << ',' << detail::format_double(r.ignored_error)
        << '\n';
  }
  detail::write_file(out / "scaling.csv", csv.str());
  nlohmann::ordered_json report;
  report["hazard"] = h;
  report["censoring_hazard"] = hc;
  report["censored_fraction"] = summary.censored_fraction;
  report["replicates"] = cfg.scaling_replicates;
  report["slope"] = summary.slope;
  report["ignored_slope"] = summary.ignored_slope;
  detail::write_file(out / "scaling.json", report.dump(2) + "\n");

  MetricsLog log(run_id(cfg, ""));
  for (const auto& r : summary.rows) {
    log.add("scaling", r.n, {{"error", r.error}, {"ignored_error", r.ignored_error}});
  }
  log.save(out / "scaling_metrics");
  return summary;
}

// ---------------------------------------------------------------------------
// end2end

struct EndToEndSummary {
  GenerateSummary data;
  std::vector<EvalSummary> evaluations;
  double max_success_gap = 0.0;
};

/// generate -> train -> evaluate for the configured estimator, or for all
/// three when compare_estimators is set (then comparison.json is written).
inline EndToEndSummary cmd_end2end(const RunConfig& cfg) {
  EndToEndSummary summary;
  summary.data = cmd_generate(cfg);
  std::vector<Estimator> estimators = {cfg.estimator};
  if (cfg.compare_estimators) estimators = {Estimator::kFinite, Estimator::kPch, Estimator::kPcs};
  for (const auto e : estimators) {
    cmd_train(cfg, e);
    summary.evaluations.push_back(cmd_evaluate(cfg, e));
  }
  if (cfg.compare_estimators) {
    nlohmann::ordered_json report;
    report["episodes"] = cfg.episodes;
    auto& deltas = report["pairs"] = nlohmann::ordered_json::array();
    for (std::size_t i = 0; i < summary.evaluations.size(); ++i) {
      for (std::size_t j = i + 1; j < summary.evaluations.size(); ++j) {
        const auto& a = summary.evaluations[i];
        const auto& b = summary.evaluations[j];
        const double gap = std::abs(a.policy_success - b.policy_success);
        summary.max_success_gap = std::max(summary.max_success_gap, gap);
        nlohmann::ordered_json d;
        d["a"] = to_string(a.estimator);
        d["b"] = to_string(b.estimator);
        d["success_delta"] = a.policy_success - b.policy_success;
        d["value_error_delta"] = a.mean_relative_error - b.mean_relative_error;
        deltas.push_back(d);
      }
    }
    report["max_success_gap"] = summary.max_success_gap;
    detail::write_file(fs::path(cfg.out_dir) / "comparison.json", report.dump(2) + "\n");
  }
  return summary;
}

}  // namespace svl
