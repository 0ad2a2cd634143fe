// Pipeline driver: preprocess | cooccur | train-embeddings | train-model |
// evaluate | ablate | chat. Exit codes: 0 ok, 2 bad input, 3 missing
// artifact, 4 numeric failure.

#include <kgdl/kgdl.hpp>

#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>

namespace {

struct Cli {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> variant;
  std::optional<std::string> kvl;
  std::optional<std::string> out_dir;
};

kgdl::PipelineConfig resolve(const Cli& cli) {
  kgdl::PipelineConfig cfg;
  if (!cli.config_path.empty()) cfg = kgdl::load_config(cli.config_path);
  if (cli.seed) cfg.apply_seed(*cli.seed);
  if (cli.variant) cfg.variant = kgdl::parse_variant(*cli.variant);
  if (cli.kvl) {
    if (*cli.kvl == "on") {
      cfg.kvl = true;
    } else if (*cli.kvl == "off") {
      cfg.kvl = false;
    } else {
      throw kgdl::ValidationError("--kvl takes on|off");
    }
  }
  if (cli.out_dir) cfg.out_dir = *cli.out_dir;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"knowledge-grounded dialogue pipeline"};
  app.require_subcommand(1);
  Cli cli;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", cli.config_path, "JSON config file");
    sub->add_option("--seed", cli.seed, "override every seed");
    sub->add_option("--variant", cli.variant, "ablation variant tag");
    sub->add_option("--kvl", cli.kvl, "constrained decoding: on|off");
    sub->add_option("--out", cli.out_dir, "artifact directory");
    sub->callback([&cli, sub] { cli.command = sub->get_name(); });
  };
  for (const char* name : {"preprocess", "cooccur", "train-embeddings", "train-model",
                           "evaluate", "ablate", "chat"})
    add_common(app.add_subcommand(name));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    const kgdl::PipelineConfig cfg = resolve(cli);
    if (cli.command == "preprocess") {
      kgdl::cmd_preprocess(cfg, std::cout);
    } else if (cli.command == "cooccur") {
      kgdl::cmd_cooccur(cfg, std::cout);
    } else if (cli.command == "train-embeddings") {
      kgdl::cmd_train_embeddings(cfg, std::cout);
    } else if (cli.command == "train-model") {
      kgdl::cmd_train_model(cfg, std::cout);
    } else if (cli.command == "evaluate") {
      kgdl::cmd_evaluate(cfg, std::cout);
    } else if (cli.command == "ablate") {
      kgdl::cmd_ablate(cfg, std::cout);
    } else if (cli.command == "chat") {
      kgdl::cmd_chat(cfg, std::cin, std::cout);
    }
    return 0;
  } catch (const kgdl::ArtifactError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const kgdl::NumericError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
