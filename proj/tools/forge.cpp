#include <iostream>

#include <CLI11.hpp>

#include "forge/pipeline.hpp"

namespace fp = forge::pipeline;

int main(int argc, char **argv) {
  CLI::App app{"forge: persona-grounded spoken dialogue dataset builder"};
  app.require_subcommand(1);
  std::string workspace, config;
  bool force = false;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;

  auto common = [&](CLI::App *cmd, bool runs) {
    cmd->add_option("-w,--workspace", workspace, "workspace directory")->required();
    if (!runs) return;
    cmd->add_option("-c,--config", config, "config file (JSON)");
    cmd->add_flag("-f,--force", force, "rerun even when up-to-date");
    cmd->add_option("--set", sets, "override a config value, e.g. --set match.tau=0.1");
    cmd->add_option("--seed", seed, "root seed");
  };
  std::vector<std::pair<std::string, CLI::App *>> stage_cmds;
  for (const auto &name : fp::stage_names()) {
    auto *cmd = app.add_subcommand(name, "run the " + name + " stage");
    common(cmd, true);
    stage_cmds.emplace_back(name, cmd);
  }
  auto *all = app.add_subcommand("all", "run every stage in order");
  common(all, true);
  auto *verify = app.add_subcommand("verify", "check every stage's outputs against its manifest");
  common(verify, false);
  auto *show = app.add_subcommand("config", "print the effective config");
  show->add_option("-c,--config", config, "config file (JSON)");
  show->add_option("--set", sets, "override a config value");
  show->add_option("--seed", seed, "root seed");

  CLI11_PARSE(app, argc, argv);

  try {
    const std::optional<std::filesystem::path> cfg_file =
        config.empty() ? std::nullopt : std::optional<std::filesystem::path>(config);
    if (show->parsed()) {
      std::cout << fp::load_config(cfg_file, sets, seed).dump(2) << "\n";
      return 0;
    }
    if (verify->parsed()) {
      bool ok = true;
      for (const auto &line : fp::verify_workspace(workspace)) {
        std::cout << line.stage << ": " << line.status << "\n";
        for (const auto &b : line.bad) std::cout << "  digest mismatch: " << b << "\n";
        ok = ok && line.status != "mismatch";
      }
      return ok ? 0 : 3;
    }
    fp::Context ctx;
    ctx.workspace = workspace;
    ctx.config = fp::load_config(cfg_file, sets, seed);
    ctx.force = force;
    ctx.log = [](const std::string &s) { std::cout << s << std::endl; };
    std::vector<std::string> stages;
    if (all->parsed())
      stages = fp::stage_names();
    else
      for (const auto &[name, cmd] : stage_cmds)
        if (cmd->parsed()) stages.push_back(name);
    fp::run_stages(ctx, stages);
    if (std::find(stages.begin(), stages.end(), "report") != stages.end())
      std::cout << "report: " << (std::filesystem::path(workspace) / "report" / "report.md").string() << "\n";
    return 0;
  } catch (const forge::Error &e) {
    std::cerr << "error [" << forge::to_string(e.kind()) << "]: " << e.what() << "\n";
    return 2;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
