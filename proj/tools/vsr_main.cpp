// Command-line front end.
//
//   vsr run <config.yaml> [--output DIR]
//   vsr replay <checkpoint> <genome> [--task T] [--episode-length L] [--out DIR] [--every K]
//   vsr aggregate <dir>
//
// Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.

#include <CLI11.hpp>

#include <cmath>
#include <iostream>
#include <optional>
#include <string>

#include "vsr/experiment.hpp"
#include "vsr/runtime.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

int cmd_run(const std::string& config_path, const std::string& output) {
  vsr::ExperimentConfig cfg;
  try {
    cfg = vsr::load_config(config_path);
  } catch (const vsr::ConfigError& e) {
    std::cerr << config_path << ": " << e.what() << '\n';
    return kExitConfig;
  }
  if (!output.empty()) cfg.output = output;
  const int workers = vsr::worker_count_from_env();
  std::cerr << "running " << cfg.methods.size() * cfg.seeds.size() << " runs on " << workers << " worker(s) into "
            << cfg.output.string() << '\n';
  try {
    const auto res = vsr::run_experiment(cfg, workers, [](const vsr::RunSummary& r) {
      std::cerr << vsr::to_string(r.method) << " seed " << r.seed << ": "
                << (r.ok ? "best " + vsr::format_double(r.best_fitness) : "FAILED: " + r.error) << '\n';
    });
    return res.ok() ? kExitOk : kExitRuntime;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_replay(const std::string& ckpt_path, const std::string& genome_path, const std::string& task_name,
               int episode_length, const std::string& out, int every) {
  vsr::Checkpoint ck;
  vsr::MorphGenome genome = vsr::MorphGenome::filled(1, 1, vsr::VoxelType::Soft);
  try {
    ck = vsr::load_checkpoint(ckpt_path);
    genome = vsr::deserialize_genome(vsr::detail::read_file(genome_path));
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  }

  vsr::TaskSpec task;
  vsr::SimParams sim;
  if (ck.env) {
    task = ck.env->task;
    sim = ck.env->sim;
  }
  if (!task_name.empty()) {
    const auto kind = vsr::parse_task(task_name);
    if (!kind) {
      std::cerr << "error: unknown task '" << task_name << "'\n";
      return kExitConfig;
    }
    task.kind = *kind;
  } else if (!ck.env) {
    std::cerr << "error: checkpoint has no environment block; pass --task\n";
    return kExitConfig;
  }
  if (episode_length > 0) task.episode_length = episode_length;

  try {
    const auto res = vsr::replay(ck, genome, task, sim, every, out.empty() ? std::nullopt : std::optional<vsr::fs::path>(out));
    std::cout << "return " << vsr::format_double(res.total_return) << "\nsteps " << res.steps << "\nframes " << res.frames
              << "\ncom_dx " << vsr::format_double(res.final_com_x - res.start_com_x) << '\n';
    return kExitOk;
  } catch (const vsr::ReplayInputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

int cmd_aggregate(const std::string& dir) {
  try {
    const auto rows = vsr::aggregate_directory(dir);
    std::cout << "method,generation,mean_best,std_best,runs\n";
    for (const auto& r : rows)
      std::cout << r.method << ',' << r.generation << ',' << vsr::format_double(r.mean_best) << ','
                << vsr::format_double(r.std_best) << ',' << r.runs << '\n';
    return kExitOk;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}

}  // namespace

int main(int argc, char** argv) {
  vsr::tune_allocator();
  CLI::App app{"Voxel soft-robot co-design: evolution with GAT/MLP controllers trained by PPO"};
  app.require_subcommand(1);

  std::string config_path, output;
  auto* run = app.add_subcommand("run", "Run the method x seed experiment matrix from a YAML config");
  run->add_option("config", config_path, "Experiment config (YAML)")->required();
  run->add_option("--output,-o", output, "Output directory (overrides the config)");

  std::string ckpt, genome, task, out;
  int every = 16, episode_length = 0;
  auto* rep = app.add_subcommand("replay", "Greedy episode of a saved checkpoint");
  rep->add_option("checkpoint", ckpt, "Checkpoint file")->required();
  rep->add_option("genome", genome, "Genome file")->required();
  rep->add_option("--task", task, "WalkerLite or PusherLite (default: from the checkpoint)");
  rep->add_option("--episode-length", episode_length, "Episode length (default: from the checkpoint)");
  rep->add_option("--out", out, "Directory for trajectory.csv and frames/");
  rep->add_option("--every", every, "Frame interval in steps")->check(CLI::PositiveNumber);

  std::string agg_dir;
  auto* agg = app.add_subcommand("aggregate", "Recompute aggregate.csv and aggregate.svg for an output directory");
  agg->add_option("dir", agg_dir, "Experiment output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  if (*run) return cmd_run(config_path, output);
  if (*rep) return cmd_replay(ckpt, genome, task, episode_length, out, every);
  return cmd_aggregate(agg_dir);
}
