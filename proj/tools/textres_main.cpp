#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "textres/pipeline/commands.hpp"

using textres::pipeline::CommandContext;
using textres::pipeline::RunConfig;

namespace {

struct Args {
  std::string config_path;
  long long seed = -1;
  bool force = false;
  bool quiet = false;
  std::vector<std::string> overrides;
  std::string ablation;
};

void add_common(CLI::App* cmd, Args& args) {
  cmd->add_option("--config", args.config_path, "flat key = value config file");
  cmd->add_option("--seed", args.seed, "overrides the config seed");
  cmd->add_flag("--force", args.force, "overwrite existing outputs");
  cmd->add_option("--set", args.overrides, "key=value override (repeatable)");
  cmd->add_flag("--quiet", args.quiet, "suppress progress messages");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"textres: text-space guided image restoration at desk scale"};
  app.require_subcommand(1);
  Args args;

  const std::map<std::string, std::string> commands{
      {"synth-data", "generate procedural clean images and degraded pairs"},
      {"train-mapper", "stage 1: train the image-to-text mapper"},
      {"train-textres", "stage 2: train the textual restorer"},
      {"gen-guidance", "sample guidance images for every manifest record"},
      {"train-restore", "train the guided restoration backbone"},
      {"evaluate", "PSNR (RGB and Y) and SSIM over the test split"},
      {"ablate", "run an ablation sweep and write a comparison table"},
  };
  std::map<std::string, CLI::App*> subs;
  for (const auto& [name, help] : commands) {
    subs[name] = app.add_subcommand(name, help);
    add_common(subs[name], args);
  }
  subs["gen-guidance"]
      ->add_option("--ablation", args.ablation, "identity-restorer or degraded-as-guidance")
      ->check(CLI::IsMember({"identity-restorer", "degraded-as-guidance"}));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    CommandContext ctx;
    ctx.config = args.config_path.empty() ? RunConfig{} : RunConfig::from_file(args.config_path);
    for (const auto& kv : args.overrides) ctx.config.set(kv);
    if (args.seed >= 0) ctx.config.set("seed", std::to_string(args.seed));
    if (args.ablation == "identity-restorer") ctx.config.set("guidance_source", "identity-restorer");
    if (args.ablation == "degraded-as-guidance") ctx.config.set("guidance_source", "degraded");
    ctx.force = args.force;
    ctx.log = args.quiet ? nullptr : &std::cerr;

    namespace p = textres::pipeline;
    if (subs["synth-data"]->parsed()) p::cmd_synth_data(ctx);
    if (subs["train-mapper"]->parsed()) p::cmd_train_mapper(ctx);
    if (subs["train-textres"]->parsed()) p::cmd_train_textres(ctx);
    if (subs["gen-guidance"]->parsed()) p::cmd_gen_guidance(ctx);
    if (subs["train-restore"]->parsed()) p::cmd_train_restore(ctx);
    if (subs["evaluate"]->parsed()) p::cmd_evaluate(ctx);
    if (subs["ablate"]->parsed()) p::cmd_ablate(ctx);
  } catch (const textres::Error& e) {
    std::cerr << "textres: " << e.what() << '\n';
    return textres::pipeline::exit_code_for(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "textres: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
