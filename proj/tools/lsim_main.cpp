#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "lsim/pipeline.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitStageFailure = 2;

struct CliOptions {
  std::string config_path;
  std::string ablation_mode = "no_logical";
  int repeats_override = 0;
};

lsim::RunConfig load_config(const CliOptions& options) {
  lsim::RunConfig config = lsim::load_run_config(options.config_path);
  if (options.repeats_override > 0) {
    config.repeats = options.repeats_override;
  }
  return config;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"lsim: logical-semantic retrieval-augmented legal QA pipeline"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(lsim::kVersion));

  CliOptions options;
  const auto add_config_option = [&](CLI::App* cmd) {
    cmd->add_option("-c,--config", options.config_path, "run config file")
        ->required();
  };

  struct Command {
    const char* name;
    const char* help;
    void (*run)(const lsim::RunConfig&);
  };
  const Command commands[] = {
      {"ingest", "validate the dataset and write the normalized copy",
       lsim::cmd_ingest},
      {"split", "produce the database/train/test split files", lsim::cmd_split},
      {"build-graph", "extract the fact-rule graph with the LLM",
       lsim::cmd_build_graph},
      {"extract-chains", "extract question/answer chains for every split",
       lsim::cmd_extract_chains},
      {"train-policy", "train the chain-prediction policy and predict chains",
       lsim::cmd_train_policy},
      {"train-dssm", "annotate relevance, build triplets, train the ranker",
       lsim::cmd_train_dssm},
      {"retrieve", "rank the database for every test question",
       lsim::cmd_retrieve},
      {"evaluate", "score generated answers against the references",
       lsim::cmd_evaluate},
  };

  for (const auto& command : commands) {
    auto* cmd = app.add_subcommand(command.name, command.help);
    add_config_option(cmd);
    cmd->callback([&, run = command.run] { run(load_config(options)); });
  }

  auto* answer = app.add_subcommand(
      "answer", "generate answers for the test split via in-context learning");
  add_config_option(answer);
  answer->add_option("--repeats", options.repeats_override,
                     "override the number of generation repeats");
  answer->callback([&] { lsim::cmd_answer(load_config(options)); });

  auto* ablate = app.add_subcommand(
      "ablate", "rerun retrieval/answer/evaluate with a feature half masked");
  add_config_option(ablate);
  ablate->add_option("--mode", options.ablation_mode,
                     "no_logical or no_semantic")
      ->required();
  ablate->callback([&] {
    lsim::cmd_ablate(load_config(options),
                     lsim::ablation_from_name(options.ablation_mode));
  });

  auto* run_all = app.add_subcommand("run-all", "run every stage in order");
  add_config_option(run_all);
  run_all->add_option("--repeats", options.repeats_override,
                      "override the number of generation repeats");
  run_all->callback([&] { lsim::run_all(load_config(options)); });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  } catch (const lsim::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStageFailure;
  }
  return kExitOk;
}
