// Command-line front end for the auto-bidding lab: dataset generation, the
// two training stages, alignment, and the evaluation suites.

#include <cstdio>
#include <string>

#include <CLI11.hpp>

#include "bidlab/harness/pipeline.hpp"

namespace {

struct StageArgs {
  std::string config;
  std::string out;
  std::uint64_t seed = 0;
};

void add_common(CLI::App* cmd, StageArgs& args) {
  cmd->add_option("--config", args.config, "experiment config file")
      ->required()
      ->check(CLI::ExistingFile);
  cmd->add_option("--out", args.out, "experiment output directory")->required();
  cmd->add_option("--seed", args.seed, "base seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bidlab: graph-embedded diffusion-planned auto-bidding lab"};
  app.require_subcommand(1);

  StageArgs args;
  using Stage = void (*)(const bidlab::harness::ExperimentConfig&,
                         std::uint64_t, const bidlab::harness::Paths&);
  struct Entry {
    const char* name;
    const char* help;
    Stage fn;
  };
  const Entry entries[] = {
      {"gen-data", "generate train and held-out datasets",
       &bidlab::harness::stage_gen_data},
      {"train-graph", "train the graph encoder and inverse dynamics model",
       &bidlab::harness::stage_train_graph},
      {"train-ldm", "train teacher and student latent diffusion models",
       &bidlab::harness::stage_train_ldm},
      {"align", "fit the value head and run rejection fine-tuning",
       &bidlab::harness::stage_align},
      {"eval-forecast", "score forecasting on held-out episodes",
       &bidlab::harness::stage_eval_forecast},
      {"eval-kpi", "compare the aligned actor with the scaling baseline",
       &bidlab::harness::stage_eval_kpi},
      {"eval-bid-accuracy", "bid-recovery accuracy on held-out episodes",
       &bidlab::harness::stage_eval_bid_accuracy},
  };
  std::map<std::string, Stage> stages;
  for (const auto& e : entries) {
    add_common(app.add_subcommand(e.name, e.help), args);
    stages[e.name] = e.fn;
  }

  if (argc <= 1) {
    std::fputs(app.help().c_str(), stderr);
    return 2;
  }
  CLI11_PARSE(app, argc, argv);

  try {
    auto cfg = bidlab::harness::load_experiment_config_file(args.config);
    bidlab::harness::Paths paths{args.out};
    std::filesystem::create_directories(paths.root);
    stages.at(app.get_subcommands().front()->get_name())(cfg, args.seed, paths);
  } catch (const bidlab::harness::DependencyError& e) {
    std::fprintf(stderr, "dependency error: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
