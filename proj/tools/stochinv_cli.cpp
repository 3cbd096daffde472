// stochinv <generate|fit|synth-obs|invert|report> --config <path> [--out <dir>]
//          [--seed <int>] [--chains <n>]

#include "stochinv/config.hpp"
#include "stochinv/error.hpp"
#include "stochinv/experiment.hpp"

#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Kernel-PCA stochastic inversion of elastic parameter fields"};
  app.require_subcommand(1, 1);

  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int chains = 0;
  bool quiet = false;

  const char* names[] = {"generate", "fit", "synth-obs", "invert", "report"};
  const char* help[] = {"generate the prior snapshot ensemble", "fit the KPCA, baseline PCA and PCE models",
                        "synthesize boundary displacement observations", "run the configured MCMC samplers",
                        "write eigenvalue, pre-image fidelity and diagnostic tables"};
  std::vector<CLI::App*> subs;
  std::vector<CLI::Option*> seed_opts, chain_opts;
  for (int i = 0; i < 5; ++i) {
    CLI::App* sub = app.add_subcommand(names[i], help[i]);
    sub->add_option("--config", config_path, "experiment configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "stage output directory");
    seed_opts.push_back(sub->add_option("--seed", seed, "override the stage's seed"));
    chain_opts.push_back(sub->add_option("--chains", chains, "number of chains")->check(CLI::PositiveNumber));
    sub->add_flag("--quiet,-q", quiet, "suppress progress output");
    subs.push_back(sub);
  }

  CLI11_PARSE(app, argc, argv);

  std::string stage = "config";
  try {
    const stochinv::ExperimentConfig config = stochinv::load_config(config_path);
    stochinv::StageOptions opts;
    opts.out = out_dir;
    opts.quiet = quiet;
    for (int i = 0; i < 5; ++i) {
      if (!subs[i]->parsed()) continue;
      stage = names[i];
      if (seed_opts[i]->count()) opts.seed = seed;
      if (chain_opts[i]->count()) opts.chains = chains;
      switch (i) {
        case 0: stochinv::cmd_generate(config, opts); break;
        case 1: stochinv::cmd_fit(config, opts); break;
        case 2: stochinv::cmd_synth_obs(config, opts); break;
        case 3: stochinv::cmd_invert(config, opts); break;
        case 4: stochinv::cmd_report(config, opts); break;
      }
    }
  } catch (const stochinv::StageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << stage << ": " << e.what() << "\n";
    return 2;
  }
  return 0;
}
