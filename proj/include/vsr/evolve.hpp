#pragma once

// Generational co-design loop: train newborns, keep the top-m elites, refill
// dead slots with mutated children of uniformly chosen elites. Children
// inherit controller weights through map_weights (transfer) or start fresh
// (scratch). Elites are never retrained.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vsr/inherit.hpp"
#include "vsr/morpho.hpp"
#include "vsr/ppo.hpp"
#include "vsr/rng.hpp"

namespace vsr {

enum class InheritMode { Transfer, Scratch };

inline std::string to_string(InheritMode m) { return m == InheritMode::Transfer ? "transfer" : "scratch"; }

struct EvoConfig {
  int population = 8;
  int generations = 6;
  int elites = 0;  // 0 -> ceil(population / 2)
  ControllerKind kind = ControllerKind::Gat;
  FeatureMode mode = FeatureMode::LocalTransfer;
  InheritMode inherit = InheritMode::Transfer;
  TaskSpec task;
  SimParams sim;
  PpoConfig ppo;
  MutationConfig mutation;
  int design_width = 5;
  int design_height = 5;
  std::uint64_t seed = 0;
  int workers = 1;

  int elite_count() const { return elites > 0 ? elites : (population + 1) / 2; }
  MlpLayout layout() const { return MlpLayout::for_design_space(design_width, design_height); }
};

inline void validate(const EvoConfig& c) {
  if (c.population < 2) throw std::invalid_argument("population must be at least 2");
  if (c.generations < 1) throw std::invalid_argument("generations must be at least 1");
  if (c.elite_count() < 1 || c.elite_count() > c.population)
    throw std::invalid_argument("elites must be in [1, population]");
  if (c.design_width < 1 || c.design_height < 1) throw std::invalid_argument("design space must be non-empty");
  if (c.ppo.clip <= 0.0) throw std::invalid_argument("ppo clip must be positive");
  if (c.ppo.gamma <= 0.0 || c.ppo.gamma > 1.0 || c.ppo.lambda <= 0.0 || c.ppo.lambda > 1.0)
    throw std::invalid_argument("ppo gamma and lambda must be in (0, 1]");
  if (c.ppo.epochs < 1 || c.ppo.minibatch < 1 || c.ppo.steps_per_batch < 0 || c.ppo.total_updates < 0)
    throw std::invalid_argument("ppo counts must be positive");
  if (c.task.episode_length < 1) throw std::invalid_argument("episode_length must be positive");
  if (c.mutation.per_cell_rate < 0.0 || c.mutation.per_cell_rate > 1.0)
    throw std::invalid_argument("mutation rate must be in [0, 1]");
}

struct Individual {
  int id = 0;
  MorphGenome genome = MorphGenome::filled(1, 1, VoxelType::HorizontalActuator);
  std::string graph_key;
  PolicyParams params;
  std::optional<double> fitness;
  bool newborn = true;
  bool failed = false;
  std::optional<int> parent;
  int birth_generation = 0;
  Rng rng{0};
  std::optional<InheritanceStats> inheritance;
  std::vector<UpdateLog> training_log;
};

struct GenerationRecord {
  int generation = 0;
  double best_fitness = kFailedFitness;
  double mean_fitness = kFailedFitness;
  std::vector<int> elite_ids;
  struct Entry {
    int id;
    std::optional<int> parent;
    double fitness;
    std::string genome_hash;
  };
  std::vector<Entry> individuals;
};

using EventSink = std::function<void(const nlohmann::json&)>;

struct Population {
  std::vector<Individual> members;
  int next_id = 0;
};

namespace detail {

inline std::string graph_key(const GraphTopology& t) { return fnv1a_hex(graph_hash(t)); }

inline void emit(const EventSink& sink, nlohmann::json ev) {
  if (sink) sink(ev);
}

inline nlohmann::json birth_event(const Individual& ind) {
  nlohmann::json ev{{"event", "birth"},
                    {"generation", ind.birth_generation},
                    {"id", ind.id},
                    {"parent", ind.parent ? nlohmann::json(*ind.parent) : nlohmann::json(nullptr)},
                    {"genome", serialize(ind.genome)},
                    {"genome_hash", genome_hash(ind.genome)},
                    {"graph_key", ind.graph_key}};
  if (ind.inheritance)
    ev["lineage"] = {{"matched", ind.inheritance->matched},
                     {"added", ind.inheritance->added},
                     {"removed", ind.inheritance->removed}};
  return ev;
}

/// Runs fn(i) for i in [0, n) on up to `workers` threads.
inline void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < n; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[static_cast<std::size_t>(i)] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace detail

inline Individual make_founder(const EvoConfig& cfg, int id, MorphGenome genome) {
  Individual ind;
  ind.id = id;
  ind.genome = std::move(genome);
  ind.rng = Rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(id)));
  const auto topo = build_topology(build_body(ind.genome, cfg.sim));
  ind.graph_key = detail::graph_key(*topo);
  ind.params = scratch_init(*topo, cfg.kind, cfg.mode, cfg.layout(), ind.rng);
  return ind;
}

inline Population init_population(const EvoConfig& cfg, Rng& rng, const EventSink& sink = {}) {
  Population pop;
  for (int k = 0; k < cfg.population; ++k) {
    auto genome = random_genome(cfg.design_width, cfg.design_height, rng);
    pop.members.push_back(make_founder(cfg, pop.next_id++, std::move(genome)));
    detail::emit(sink, detail::birth_event(pop.members.back()));
  }
  return pop;
}

/// Child of `parent`: mutated genome, inherited or fresh controller.
inline Individual make_child(const EvoConfig& cfg, const Individual& parent, int id, int generation, Rng& rng) {
  Individual child;
  child.id = id;
  child.parent = parent.id;
  child.birth_generation = generation;
  child.genome = mutate(parent.genome, cfg.mutation, rng);
  child.rng = Rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(id)));
  const auto topo = build_topology(build_body(child.genome, cfg.sim));
  child.graph_key = detail::graph_key(*topo);
  if (cfg.inherit == InheritMode::Transfer) {
    const auto parent_topo = build_topology(build_body(parent.genome, cfg.sim));
    Inherited inh = map_weights(parent.params, *parent_topo, *topo, child.rng);
    child.params = std::move(inh.params);
    child.inheritance = inh.stats;
  } else {
    child.params = scratch_init(*topo, cfg.kind, cfg.mode, cfg.layout(), child.rng);
  }
  return child;
}

inline void train_newborn(const EvoConfig& cfg, Individual& ind) {
  TrainingResult r = train_individual(ind.genome, std::move(ind.params), cfg.task, cfg.sim, cfg.ppo, ind.rng);
  ind.params = std::move(r.params);
  ind.fitness = r.best_return;
  ind.failed = r.failed;
  ind.training_log = std::move(r.log);
  ind.newborn = false;
}

/// Indices of the elites, best first. Failed individuals only qualify when
/// every individual failed.
inline std::vector<std::size_t> select_elites(const std::vector<Individual>& members, int m) {
  std::vector<std::size_t> order(members.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const double fa = members[a].fitness.value_or(kFailedFitness), fb = members[b].fitness.value_or(kFailedFitness);
    if (fa != fb) return fa > fb;
    return members[a].id < members[b].id;
  });
  const bool any_ok = std::any_of(members.begin(), members.end(), [](const Individual& i) { return !i.failed; });
  std::vector<std::size_t> out;
  for (std::size_t i : order) {
    if (static_cast<int>(out.size()) == m) break;
    if (any_ok && members[i].failed) continue;
    out.push_back(i);
  }
  return out;
}

using TrainedHook = std::function<void(const Individual&)>;

/// Train newborns, select elites; refill afterwards unless `refill` is false.
/// `on_trained` sees each newborn after training, before selection.
inline GenerationRecord generation_step(Population& pop, const EvoConfig& cfg, int generation, Rng& rng,
                                        const EventSink& sink = {}, bool refill = true,
                                        const TrainedHook& on_trained = {}) {
  std::vector<std::size_t> todo;
  for (std::size_t i = 0; i < pop.members.size(); ++i)
    if (pop.members[i].newborn) todo.push_back(i);
  detail::parallel_for(static_cast<int>(todo.size()), cfg.workers,
                       [&](int k) { train_newborn(cfg, pop.members[todo[static_cast<std::size_t>(k)]]); });
  for (std::size_t i : todo) {
    const auto& ind = pop.members[i];
    if (on_trained) on_trained(ind);
    detail::emit(sink, {{"event", "trained"},
                        {"generation", generation},
                        {"id", ind.id},
                        {"fitness", *ind.fitness},
                        {"failed", ind.failed},
                        {"updates", ind.training_log.size()}});
  }

  GenerationRecord rec;
  rec.generation = generation;
  double sum = 0.0;
  int ok = 0;
  for (const auto& ind : pop.members) {
    rec.individuals.push_back({ind.id, ind.parent, *ind.fitness, genome_hash(ind.genome)});
    rec.best_fitness = std::max(rec.best_fitness, *ind.fitness);
    if (!ind.failed) {
      sum += *ind.fitness;
      ++ok;
    }
  }
  if (ok > 0) rec.mean_fitness = sum / ok;

  const auto elite_idx = select_elites(pop.members, cfg.elite_count());
  std::vector<Individual> survivors;
  std::vector<int> dead;
  for (std::size_t i : elite_idx) {
    survivors.push_back(std::move(pop.members[i]));
    rec.elite_ids.push_back(survivors.back().id);
  }
  for (const auto& ind : pop.members)
    if (std::find(rec.elite_ids.begin(), rec.elite_ids.end(), ind.id) == rec.elite_ids.end()) dead.push_back(ind.id);
  std::sort(dead.begin(), dead.end());
  detail::emit(sink, {{"event", "selection"}, {"generation", generation}, {"elites", rec.elite_ids}, {"dead", dead}});

  pop.members = std::move(survivors);
  if (refill) {
    const std::size_t n_elites = pop.members.size();
    while (static_cast<int>(pop.members.size()) < cfg.population) {
      const Individual& parent = pop.members[rng.index(n_elites)];
      pop.members.push_back(make_child(cfg, parent, pop.next_id++, generation + 1, rng));
      detail::emit(sink, detail::birth_event(pop.members.back()));
    }
  }
  return rec;
}

struct RunResult {
  Individual best;
  std::vector<GenerationRecord> history;
};

/// Index of the fittest trained member, lowest id on ties.
inline std::size_t best_member(const Population& pop) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < pop.members.size(); ++i) {
    const double fb = pop.members[best].fitness.value_or(kFailedFitness);
    const double fi = pop.members[i].fitness.value_or(kFailedFitness);
    if (fi > fb || (fi == fb && pop.members[i].id < pop.members[best].id)) best = i;
  }
  return best;
}

/// Runs cfg.generations generations and returns the fittest survivor.
inline RunResult run(const EvoConfig& cfg, const EventSink& sink = {}, const TrainedHook& on_trained = {}) {
  validate(cfg);
  Rng rng(derive_seed(cfg.seed, 0xe701e));
  Population pop = init_population(cfg, rng, sink);
  RunResult out;
  for (int g = 0; g < cfg.generations; ++g)
    out.history.push_back(generation_step(pop, cfg, g, rng, sink, g + 1 < cfg.generations, on_trained));
  out.best = pop.members[best_member(pop)];
  return out;
}

}  // namespace vsr
