#pragma once

// Experiment driver: YAML config, the method x seed matrix, per-run output
// trees, the cross-run aggregate and greedy replay of saved checkpoints.
//
// Output tree:
//   <out>/<method>/seed_<s>/events.jsonl
//                          /generations.csv
//                          /individuals.csv
//                          /training/ind_<id>.csv
//                          /best.ckpt  best.genome  best.svg  eval.txt
//   <out>/summary.csv  aggregate.csv  aggregate.svg

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "vsr/checkpoint.hpp"
#include "vsr/evolve.hpp"
#include "vsr/rollout.hpp"
#include "vsr/svg.hpp"

namespace vsr {

namespace fs = std::filesystem;

/// Invalid configuration. `line` is 1-based, 0 when no position applies.
struct ConfigError : std::runtime_error {
  int line;
  ConfigError(int line_no, const std::string& msg)
      : std::runtime_error(line_no > 0 ? "line " + std::to_string(line_no) + ": " + msg : msg), line(line_no) {}
};

enum class Method { GatGlobalTransfer, GatLocalTransfer, MlpTransfer, MlpScratch };

inline constexpr Method kAllMethods[] = {Method::GatGlobalTransfer, Method::GatLocalTransfer, Method::MlpTransfer,
                                         Method::MlpScratch};

inline std::string to_string(Method m) {
  switch (m) {
    case Method::GatGlobalTransfer: return "gat-global-transfer";
    case Method::GatLocalTransfer: return "gat-local-transfer";
    case Method::MlpTransfer: return "mlp-transfer";
    case Method::MlpScratch: return "mlp-scratch";
  }
  return "";
}

inline std::optional<Method> parse_method(std::string_view s) {
  for (Method m : kAllMethods)
    if (to_string(m) == s) return m;
  return std::nullopt;
}

/// Controller kind, feature mode and inheritance for a method.
inline void apply_method(Method m, EvoConfig& cfg) {
  switch (m) {
    case Method::GatGlobalTransfer:
      cfg.kind = ControllerKind::Gat;
      cfg.mode = FeatureMode::GlobalTransfer;
      cfg.inherit = InheritMode::Transfer;
      break;
    case Method::GatLocalTransfer:
      cfg.kind = ControllerKind::Gat;
      cfg.mode = FeatureMode::LocalTransfer;
      cfg.inherit = InheritMode::Transfer;
      break;
    case Method::MlpTransfer:
      cfg.kind = ControllerKind::Mlp;
      cfg.mode = FeatureMode::LocalTransfer;
      cfg.inherit = InheritMode::Transfer;
      break;
    case Method::MlpScratch:
      cfg.kind = ControllerKind::Mlp;
      cfg.mode = FeatureMode::LocalTransfer;
      cfg.inherit = InheritMode::Scratch;
      break;
  }
}

struct ExperimentConfig {
  fs::path output = "results";
  std::vector<Method> methods{std::begin(kAllMethods), std::end(kAllMethods)};
  std::vector<std::uint64_t> seeds{1, 2, 3};
  EvoConfig evo;  // task, sim, ppo and GA settings; kind/mode/inherit come from the method
};

/// Shortest decimal that round-trips.
inline std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return "nan";
  return std::string(buf, end);
}

namespace detail {

inline int line_of(const YAML::Node& n) {
  if (!n.IsDefined()) return 0;
  const int line = n.Mark().line;
  return line >= 0 ? line + 1 : 0;
}

template <typename T>
T scalar(const YAML::Node& n, const std::string& key) {
  if (!n.IsScalar()) throw ConfigError(line_of(n), "'" + key + "' must be a scalar");
  try {
    return n.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError(line_of(n), "bad value '" + n.Scalar() + "' for '" + key + "'");
  }
}

template <typename T>
T bounded(const YAML::Node& n, const std::string& key, T lo, T hi) {
  const T v = scalar<T>(n, key);
  if (!(v >= lo && v <= hi)) {
    std::ostringstream msg;
    msg << "'" << key << "' must be in [" << lo << ", " << hi << "]";
    throw ConfigError(line_of(n), msg.str());
  }
  return v;
}

inline void require_map(const YAML::Node& n, const std::string& what) {
  if (!n.IsMap()) throw ConfigError(line_of(n), "'" + what + "' must be a mapping");
}

inline void parse_evolution(const YAML::Node& node, EvoConfig& evo) {
  require_map(node, "evolution");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "population") evo.population = bounded<int>(v, key, 2, 100000);
    else if (key == "generations") evo.generations = bounded<int>(v, key, 1, 100000);
    else if (key == "elites") evo.elites = bounded<int>(v, key, 1, 100000);
    else if (key == "mutation_rate") evo.mutation.per_cell_rate = bounded<double>(v, key, 0.0, 1.0);
    else if (key == "mutation_retries") evo.mutation.max_retries = bounded<int>(v, key, 1, 1000000);
    else if (key == "design_width") evo.design_width = bounded<int>(v, key, 1, 64);
    else if (key == "design_height") evo.design_height = bounded<int>(v, key, 1, 64);
    else throw ConfigError(line_of(kv.first), "unknown key 'evolution." + key + "'");
  }
  if (evo.elites > evo.population) throw ConfigError(line_of(node["elites"]), "'elites' must not exceed 'population'");
}

inline void parse_ppo(const YAML::Node& node, PpoConfig& ppo) {
  require_map(node, "ppo");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "clip") ppo.clip = bounded<double>(v, key, 1e-6, 10.0);
    else if (key == "gamma") ppo.gamma = bounded<double>(v, key, 1e-6, 1.0);
    else if (key == "lambda") ppo.lambda = bounded<double>(v, key, 1e-6, 1.0);
    else if (key == "learning_rate") ppo.learning_rate = bounded<double>(v, key, 0.0, 10.0);
    else if (key == "epochs") ppo.epochs = bounded<int>(v, key, 1, 1000);
    else if (key == "minibatch") ppo.minibatch = bounded<int>(v, key, 1, 1 << 20);
    else if (key == "value_coef") ppo.value_coef = bounded<double>(v, key, 0.0, 1e6);
    else if (key == "entropy_coef") ppo.entropy_coef = bounded<double>(v, key, -1e6, 1e6);
    else if (key == "max_grad_norm") ppo.max_grad_norm = bounded<double>(v, key, 0.0, 1e12);
    else if (key == "steps_per_batch") ppo.steps_per_batch = bounded<int>(v, key, 1, 1 << 24);
    else if (key == "total_updates") ppo.total_updates = bounded<int>(v, key, 0, 1 << 20);
    else throw ConfigError(line_of(kv.first), "unknown key 'ppo." + key + "'");
  }
}

inline void parse_sim(const YAML::Node& node, SimParams& sim) {
  require_map(node, "sim");
  for (const auto& kv : node) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    if (key == "substeps") {
      sim.substeps = bounded<int>(v, key, 1, 10000);
      continue;
    }
    bool found = false;
    for_each_field(sim, [&](const char* name, double& field) {
      if (key == name) {
        field = scalar<double>(v, key);
        if (!std::isfinite(field)) throw ConfigError(line_of(v), "'sim." + key + "' must be finite");
        found = true;
      }
    });
    if (!found) throw ConfigError(line_of(kv.first), "unknown key 'sim." + key + "'");
  }
  const auto positive = [&](double x, const char* key) {
    if (!(x > 0.0)) throw ConfigError(line_of(node[key]), std::string("'sim.") + key + "' must be positive");
  };
  positive(sim.voxel_size, "voxel_size");
  positive(sim.voxel_mass, "voxel_mass");
  positive(sim.dt, "dt");
  if (sim.min_rest_scale > sim.max_rest_scale)
    throw ConfigError(line_of(node["min_rest_scale"]), "'sim.min_rest_scale' exceeds 'sim.max_rest_scale'");
}

}  // namespace detail

/// Parses a YAML experiment config. Unknown keys and out-of-range values are
/// reported with their line number.
inline ExperimentConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(e.mark.line + 1, e.msg);
  }
  if (!root || root.IsNull()) throw ConfigError(0, "empty config");
  detail::require_map(root, "config");

  ExperimentConfig cfg;
  bool saw_method = false;
  for (const auto& kv : root) {
    const std::string key = kv.first.as<std::string>();
    const YAML::Node& v = kv.second;
    const int line = detail::line_of(kv.first);
    if (key == "output") {
      cfg.output = detail::scalar<std::string>(v, key);
    } else if (key == "method" || key == "methods") {
      if (saw_method) throw ConfigError(line, "give either 'method' or 'methods', once");
      saw_method = true;
      std::vector<YAML::Node> items;
      if (v.IsSequence())
        for (const auto& item : v) items.push_back(item);
      else
        items.push_back(v);
      if (items.empty()) throw ConfigError(line, "'methods' is empty");
      cfg.methods.clear();
      for (const auto& item : items) {
        const auto name = detail::scalar<std::string>(item, key);
        const auto m = parse_method(name);
        if (!m) throw ConfigError(detail::line_of(item), "unknown method '" + name + "'");
        if (std::find(cfg.methods.begin(), cfg.methods.end(), *m) != cfg.methods.end())
          throw ConfigError(detail::line_of(item), "duplicate method '" + name + "'");
        cfg.methods.push_back(*m);
      }
    } else if (key == "seeds") {
      if (!v.IsSequence() || v.size() == 0) throw ConfigError(line, "'seeds' must be a non-empty list");
      cfg.seeds.clear();
      for (const auto& item : v) {
        const auto s = detail::scalar<std::uint64_t>(item, key);
        if (std::find(cfg.seeds.begin(), cfg.seeds.end(), s) != cfg.seeds.end())
          throw ConfigError(detail::line_of(item), "duplicate seed " + std::to_string(s));
        cfg.seeds.push_back(s);
      }
    } else if (key == "task") {
      const auto name = detail::scalar<std::string>(v, key);
      const auto t = parse_task(name);
      if (!t) throw ConfigError(detail::line_of(v), "unknown task '" + name + "'");
      cfg.evo.task.kind = *t;
    } else if (key == "episode_length") {
      cfg.evo.task.episode_length = detail::bounded<int>(v, key, 1, 1 << 20);
    } else if (key == "evolution") {
      detail::parse_evolution(v, cfg.evo);
    } else if (key == "ppo") {
      detail::parse_ppo(v, cfg.evo.ppo);
    } else if (key == "sim") {
      detail::parse_sim(v, cfg.evo.sim);
    } else {
      throw ConfigError(line, "unknown key '" + key + "'");
    }
  }
  try {
    validate(cfg.evo);
  } catch (const std::invalid_argument& e) {
    throw ConfigError(0, e.what());
  }
  return cfg;
}

inline ExperimentConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(0, "cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

namespace detail {

inline void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("write failed for " + path.string());
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string join_ids(const std::vector<int>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) s += (i ? ";" : "") + std::to_string(ids[i]);
  return s;
}

inline std::string training_csv(const Individual& ind) {
  std::ostringstream out;
  out << "update,mean_return,best_return,policy_loss,value_loss,entropy,clip_fraction\n";
  for (const auto& e : ind.training_log)
    out << e.update << ',' << format_double(e.mean_return) << ',' << format_double(e.best_return) << ','
        << format_double(e.stats.policy_loss) << ',' << format_double(e.stats.value_loss) << ','
        << format_double(e.stats.entropy) << ',' << format_double(e.stats.clip_fraction) << '\n';
  return out.str();
}

}  // namespace detail

struct RunSummary {
  Method method = Method::GatLocalTransfer;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;
  std::vector<double> best_curve;  // best fitness per generation
  int best_id = -1;
  double best_fitness = kFailedFitness;
  double eval_return = 0.0;
  std::string best_genome_hash;
};

inline fs::path run_directory(const fs::path& root, Method m, std::uint64_t seed) {
  return root / to_string(m) / ("seed_" + std::to_string(seed));
}

/// One (method, seed) run. Files are written as generations complete, so a
/// failure leaves everything produced so far on disk.
inline RunSummary run_single(const ExperimentConfig& exp, Method method, std::uint64_t seed) {
  RunSummary sum;
  sum.method = method;
  sum.seed = seed;
  const fs::path dir = run_directory(exp.output, method, seed);
  fs::create_directories(dir / "training");

  EvoConfig cfg = exp.evo;
  apply_method(method, cfg);
  cfg.seed = seed;
  cfg.workers = 1;

  std::ofstream events(dir / "events.jsonl", std::ios::binary);
  std::ofstream gens(dir / "generations.csv", std::ios::binary);
  std::ofstream inds(dir / "individuals.csv", std::ios::binary);
  if (!events || !gens || !inds) throw std::runtime_error("cannot create outputs in " + dir.string());
  gens << "generation,best_fitness,mean_fitness,elite_ids\n";
  inds << "generation,id,parent,fitness,genome_hash\n";

  const EventSink sink = [&](const nlohmann::json& ev) { events << ev.dump() << '\n' << std::flush; };
  const TrainedHook on_trained = [&](const Individual& ind) {
    detail::write_file(dir / "training" / ("ind_" + std::to_string(ind.id) + ".csv"), detail::training_csv(ind));
  };

  try {
    validate(cfg);
    detail::emit(sink, {{"event", "run_start"},
                        {"method", to_string(method)},
                        {"seed", seed},
                        {"task", to_string(cfg.task.kind)},
                        {"population", cfg.population},
                        {"generations", cfg.generations},
                        {"elites", cfg.elite_count()}});
    Rng rng(derive_seed(cfg.seed, 0xe701e));
    Population pop = init_population(cfg, rng, sink);
    for (int g = 0; g < cfg.generations; ++g) {
      const GenerationRecord rec = generation_step(pop, cfg, g, rng, sink, g + 1 < cfg.generations, on_trained);
      gens << rec.generation << ',' << format_double(rec.best_fitness) << ',' << format_double(rec.mean_fitness) << ','
           << detail::join_ids(rec.elite_ids) << '\n'
           << std::flush;
      for (const auto& e : rec.individuals)
        inds << rec.generation << ',' << e.id << ',' << (e.parent ? std::to_string(*e.parent) : "") << ','
             << format_double(e.fitness) << ',' << e.genome_hash << '\n';
      inds.flush();
      sum.best_curve.push_back(rec.best_fitness);
    }

    // After the last generation the population is exactly the elites.
    const Individual& best = pop.members[best_member(pop)];
    sum.best_id = best.id;
    sum.best_fitness = best.fitness.value_or(kFailedFitness);
    sum.best_genome_hash = genome_hash(best.genome);
    sum.eval_return = evaluate_return(best.genome, best.params, cfg.task, cfg.sim);
    save_checkpoint((dir / "best.ckpt").string(), Checkpoint{best.params, CheckpointEnv{cfg.task, cfg.sim}});
    detail::write_file(dir / "best.genome", serialize(best.genome) + "\n");
    detail::write_file(dir / "best.svg", svg::render_state(make_state(best.genome, cfg.task.kind, cfg.sim), 0));
    detail::write_file(dir / "eval.txt", "eval_return " + format_double(sum.eval_return) + "\n");
    detail::emit(sink, {{"event", "run_end"},
                        {"best_id", sum.best_id},
                        {"best_fitness", sum.best_fitness},
                        {"eval_return", sum.eval_return},
                        {"genome_hash", sum.best_genome_hash}});
    sum.ok = true;
  } catch (const std::exception& e) {
    sum.error = e.what();
    detail::emit(sink, {{"event", "error"}, {"message", sum.error}});
    detail::write_file(dir / "error.txt", sum.error + "\n");
  }
  return sum;
}

struct AggregateRow {
  std::string method;
  int generation = 0;
  double mean_best = 0.0;
  double std_best = 0.0;  // population std (ddof 0)
  int runs = 0;
};

/// Per-generation mean and std across curves. Shorter curves (partial runs)
/// only contribute to the generations they reached.
inline std::vector<AggregateRow> aggregate_curves(const std::string& method, const std::vector<std::vector<double>>& curves) {
  std::size_t n = 0;
  for (const auto& c : curves) n = std::max(n, c.size());
  std::vector<AggregateRow> rows;
  for (std::size_t g = 0; g < n; ++g) {
    std::vector<double> xs;
    for (const auto& c : curves)
      if (g < c.size()) xs.push_back(c[g]);
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= static_cast<double>(xs.size());
    double var = 0.0;
    for (double x : xs) var += (x - mean) * (x - mean);
    var /= static_cast<double>(xs.size());
    rows.push_back({method, static_cast<int>(g), mean, std::sqrt(var), static_cast<int>(xs.size())});
  }
  return rows;
}

namespace detail {

inline std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(line);
  while (std::getline(in, cur, sep)) out.push_back(cur);
  if (!line.empty() && line.back() == sep) out.emplace_back();
  return out;
}

/// best_fitness column of a generations.csv.
inline std::vector<double> read_best_curve(const fs::path& path) {
  std::istringstream in(read_file(path));
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error(path.string() + ": empty file");
  const auto header = split(line, ',');
  const auto col = std::find(header.begin(), header.end(), "best_fitness") - header.begin();
  if (col == static_cast<long>(header.size())) throw std::runtime_error(path.string() + ": no best_fitness column");
  std::vector<double> curve;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto cells = split(line, ',');
    double v = 0.0;
    const std::string& cell = cells.at(static_cast<std::size_t>(col));
    auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
    if (ec != std::errc{} || ptr != cell.data() + cell.size())
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": bad number '" + cell + "'");
    curve.push_back(v);
  }
  return curve;
}

inline int method_rank(const std::string& name) {
  for (std::size_t i = 0; i < std::size(kAllMethods); ++i)
    if (to_string(kAllMethods[i]) == name) return static_cast<int>(i);
  return static_cast<int>(std::size(kAllMethods));
}

}  // namespace detail

/// Reads every <dir>/<method>/seed_*/generations.csv and writes
/// aggregate.csv and aggregate.svg into dir.
inline std::vector<AggregateRow> aggregate_directory(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<std::string> methods;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_directory()) methods.push_back(e.path().filename().string());
  std::sort(methods.begin(), methods.end(), [](const std::string& a, const std::string& b) {
    const int ra = detail::method_rank(a), rb = detail::method_rank(b);
    return ra != rb ? ra < rb : a < b;
  });

  std::vector<AggregateRow> all;
  std::vector<svg::Series> series;
  for (const auto& m : methods) {
    std::vector<fs::path> runs;
    for (const auto& e : fs::directory_iterator(dir / m)) {
      const auto name = e.path().filename().string();
      if (e.is_directory() && name.rfind("seed_", 0) == 0 && fs::exists(e.path() / "generations.csv"))
        runs.push_back(e.path());
    }
    std::sort(runs.begin(), runs.end());
    std::vector<std::vector<double>> curves;
    for (const auto& r : runs) {
      auto c = detail::read_best_curve(r / "generations.csv");
      if (!c.empty()) curves.push_back(std::move(c));
    }
    if (curves.empty()) continue;
    const auto rows = aggregate_curves(m, curves);
    svg::Series s{m, {}, {}};
    for (const auto& r : rows) {
      s.mean.push_back(r.mean_best);
      s.std.push_back(r.std_best);
    }
    series.push_back(std::move(s));
    all.insert(all.end(), rows.begin(), rows.end());
  }
  if (all.empty()) throw std::runtime_error("no runs found under " + dir.string());

  std::ostringstream csv;
  csv << "method,generation,mean_best,std_best,runs\n";
  for (const auto& r : all)
    csv << r.method << ',' << r.generation << ',' << format_double(r.mean_best) << ',' << format_double(r.std_best) << ','
        << r.runs << '\n';
  detail::write_file(dir / "aggregate.csv", csv.str());
  detail::write_file(dir / "aggregate.svg", svg::plot_curves(series, "Best fitness per generation", "generation", "best fitness"));
  return all;
}

struct ExperimentResult {
  std::vector<RunSummary> runs;  // method-major, then seed, in config order
  std::vector<AggregateRow> aggregate;
  bool ok() const {
    return std::all_of(runs.begin(), runs.end(), [](const RunSummary& r) { return r.ok; });
  }
};

/// Runs the method x seed matrix on `workers` threads, then writes
/// summary.csv and the aggregate. Results do not depend on `workers`.
inline ExperimentResult run_experiment(const ExperimentConfig& exp, int workers = 1,
                                       const std::function<void(const RunSummary&)>& on_done = {}) {
  fs::create_directories(exp.output);
  ExperimentResult res;
  for (Method m : exp.methods)
    for (std::uint64_t s : exp.seeds) {
      RunSummary r;
      r.method = m;
      r.seed = s;
      res.runs.push_back(std::move(r));
    }
  std::mutex mu;
  detail::parallel_for(static_cast<int>(res.runs.size()), workers, [&](int i) {
    auto& slot = res.runs[static_cast<std::size_t>(i)];
    RunSummary r;
    try {
      r = run_single(exp, slot.method, slot.seed);
    } catch (const std::exception& e) {
      r = slot;
      r.error = e.what();
    }
    slot = std::move(r);
    if (on_done) {
      std::lock_guard<std::mutex> lock(mu);
      on_done(slot);
    }
  });

  std::ostringstream csv;
  csv << "method,seed,status,final_best_fitness,eval_return,best_id,best_genome_hash\n";
  for (const auto& r : res.runs)
    csv << to_string(r.method) << ',' << r.seed << ',' << (r.ok ? "ok" : "failed") << ','
        << (r.ok ? format_double(r.best_fitness) : "") << ',' << (r.ok ? format_double(r.eval_return) : "") << ','
        << (r.ok ? std::to_string(r.best_id) : "") << ',' << r.best_genome_hash << '\n';
  detail::write_file(exp.output / "summary.csv", csv.str());
  res.aggregate = aggregate_directory(exp.output);
  return res;
}

/// Checkpoint/genome mismatch or unreadable replay inputs.
struct ReplayInputError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ReplayResult {
  double total_return = 0.0;
  int steps = 0;
  int frames = 0;
  double start_com_x = 0.0;
  double final_com_x = 0.0;
};

/// Greedy episode of `ck` on `genome`. Writes trajectory.csv and a frame SVG
/// every `every` steps (frames/frame_<step>.svg) into out_dir when given.
inline ReplayResult replay(const Checkpoint& ck, const MorphGenome& genome, const TaskSpec& task, const SimParams& sim,
                           int every, const std::optional<fs::path>& out_dir) {
  if (every < 1) throw std::invalid_argument("frame interval must be positive");
  const auto topo = build_topology(build_body(genome, sim));
  try {
    check_actor_keys(ck.params, topo->actuator_keys);
  } catch (const std::exception& e) {
    throw ReplayInputError(e.what());
  }

  ReplayResult res;
  res.start_com_x = center_of_mass(make_state(genome, task.kind, sim).body.masses).x();
  std::ostringstream traj;
  traj << "step,reward,com_x,com_y\n";
  if (out_dir) fs::create_directories(*out_dir / "frames");
  const StepObserver observer = [&](int t, double reward, const SimState& st) {
    const Vec2 com = center_of_mass(st.body.masses);
    traj << t << ',' << format_double(reward) << ',' << format_double(com.x()) << ',' << format_double(com.y()) << '\n';
    res.final_com_x = com.x();
    res.steps = t + 1;
    if (t % every == 0) {
      ++res.frames;
      if (out_dir) {
        char name[32];
        std::snprintf(name, sizeof(name), "frame_%05d.svg", t);
        detail::write_file(*out_dir / "frames" / name, svg::render_state(st, t));
      }
    }
  };
  Rng unused(0);
  res.total_return = rollout(genome, ck.params, task, sim, unused, ActionMode::Greedy, observer).total_return;
  if (out_dir) detail::write_file(*out_dir / "trajectory.csv", traj.str());
  return res;
}

}  // namespace vsr
