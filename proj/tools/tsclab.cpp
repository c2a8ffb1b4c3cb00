// tsclab: batch front end over the experiment drivers.
//
// Exit codes: 0 success, 2 config error (bad flags, bad config file,
// inconsistent sections), 3 runtime error.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tsc/experiment.hpp"
#include "tsc/util.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Region-based multi-agent traffic signal control laboratory"};
  app.require_subcommand(1);

  std::string config_path, out_dir, checkpoint;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> flows;
  int reps = 0;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("-c,--config", config_path, "experiment config (JSON)")
        ->required();
    sub->add_option("-o,--out", out_dir, "output directory override");
    sub->add_option("-s,--seed", seeds,
                    "seed override; repeat for multi-seed runs (each seed "
                    "writes to <out>/seed_<n>)");
  };

  CLI::App* p_part =
      app.add_subcommand("partition", "warm-up run + region formation");
  add_common(p_part);
  CLI::App* p_train = app.add_subcommand("train", "train the configured model");
  add_common(p_train);
  CLI::App* p_eval =
      app.add_subcommand("eval", "frozen greedy evaluation over flows");
  add_common(p_eval);
  p_eval->add_option("-k,--checkpoint", checkpoint,
                     "checkpoint bundle directory (learned models)");
  p_eval->add_option("-f,--flow", flows,
                     "flow preset to evaluate; repeatable (default: the "
                     "config's flow)");
  p_eval->add_option("-r,--reps", reps,
                     "repetitions per flow (default: training.eval_reps)");
  CLI::App* p_tune =
      app.add_subcommand("tune", "SPSA lambda tuning on a regionwide run");
  add_common(p_tune);
  CLI::App* p_sweep =
      app.add_subcommand("sweep", "alpha sweep: region count vs alpha");
  add_common(p_sweep);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  auto run_one = [&](const tsc::ExperimentConfig& cfg) -> int {
    if (p_part->parsed()) return tsc::cmd_partition(cfg);
    if (p_train->parsed()) return tsc::cmd_train(cfg);
    if (p_eval->parsed()) {
      int r = reps > 0 ? reps : cfg.training.eval_reps;
      return tsc::cmd_eval(cfg, checkpoint, flows, r);
    }
    if (p_tune->parsed()) return tsc::cmd_tune(cfg);
    return tsc::cmd_sweep(cfg);
  };

  try {
    tsc::ExperimentConfig base = tsc::load_config(config_path);
    if (!out_dir.empty()) base.output.dir = out_dir;
    if (seeds.empty()) return run_one(base);
    if (seeds.size() == 1) {
      base.training.seed = seeds[0];
      return run_one(base);
    }
    for (std::uint64_t s : seeds) {
      tsc::ExperimentConfig cfg = base;
      cfg.training.seed = s;
      cfg.output.dir = base.output.dir + "/seed_" + std::to_string(s);
      if (int rc = run_one(cfg); rc != 0) return rc;
    }
    return 0;
  } catch (const tsc::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
