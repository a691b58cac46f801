#include <cstdint>
#include <functional>
#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "specpost/errors.hpp"
#include "specpost/experiment.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumerical = 3;

struct Flags {
  std::string config;
  std::int64_t seed = -1;
  std::string out;
  int threads = 0;
};

void add_flags(CLI::App* cmd, Flags& f) {
  cmd->add_option("--config", f.config, "experiment config file")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "override run.seed")->check(CLI::NonNegativeNumber);
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--threads", f.threads, "worker threads")->check(CLI::PositiveNumber);
}

specpost::CommandOptions to_options(const Flags& f) {
  specpost::CommandOptions o;
  o.config = f.config;
  if (f.seed >= 0) o.seed = static_cast<std::uint64_t>(f.seed);
  if (!f.out.empty()) o.out = f.out;
  if (f.threads > 0) o.threads = f.threads;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Spectral analysis and weight design for diffusion posterior samplers"};
  app.set_version_flag("--version", specpost::tool_version());
  app.require_subcommand(1);

  using Command = std::function<void(const specpost::ExperimentConfig&)>;
  const std::map<std::string, std::pair<std::string, Command>> commands = {
      {"optimize", {"optimize guidance weights", specpost::cmd_optimize}},
      {"sweep-wasserstein", {"W2 to the true posterior across samplers and step counts", specpost::cmd_sweep_wasserstein}},
      {"simulate", {"time-domain Monte Carlo and heuristic weight profiles", specpost::cmd_simulate}},
      {"estimate-prior", {"estimate a stationary spectral prior from samples", specpost::cmd_estimate_prior}},
      {"eval-loss", {"evaluate W2 losses of a weight source", specpost::cmd_eval_loss}},
  };
  Flags flags;
  std::map<CLI::App*, Command> handlers;
  for (const auto& [name, entry] : commands) {
    CLI::App* cmd = app.add_subcommand(name, entry.first);
    add_flags(cmd, flags);
    handlers[cmd] = entry.second;
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    for (const auto& [cmd, run] : handlers) {
      if (cmd->parsed()) run(specpost::load_experiment(to_options(flags)));
    }
  } catch (const specpost::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const specpost::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
