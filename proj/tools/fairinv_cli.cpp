#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fairinv/config.hpp"
#include "fairinv/error.hpp"
#include "fairinv/harness.hpp"

namespace {

struct Common {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "INI config file (defaults when omitted)");
  sub->add_option_function<std::uint64_t>(
      "--seed",
      [&c](const std::uint64_t& s) {
        c.seed = s;
        c.seed_set = true;
      },
      "single seed (overrides run.seeds)");
  sub->add_option("--out", c.out, "output directory (overrides run.out)");
}

fairinv::RunConfig resolve(const Common& c) {
  fairinv::RunConfig cfg = c.config.empty() ? fairinv::RunConfig{} : fairinv::load_config(c.config);
  if (c.seed_set) cfg.seeds = {c.seed};
  if (!c.out.empty()) cfg.out = c.out;
  cfg.validate();
  return cfg;
}

std::uint64_t first_seed(const fairinv::RunConfig& cfg) { return cfg.seeds.front(); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fair node classification with inferred sensitive partitions"};
  app.require_subcommand(1);

  Common train_o, eval_o, ablate_o, sweep_o, time_o, gen_o, inspect_o;
  std::string variant;
  std::string checkpoint;
  std::vector<std::string> attrs;

  auto* train = app.add_subcommand("train", "ERM baseline and the chosen variant for every seed");
  add_common(train, train_o);
  train->add_option("--variant", variant, "erm | fairinv | minus_vi | minus_sap | minus_sil");

  auto* eval = app.add_subcommand("eval-multi", "evaluate one checkpoint on several attributes");
  add_common(eval, eval_o);
  eval->add_option("--checkpoint", checkpoint, "saved model parameters")->required();
  eval->add_option("--attrs", attrs, "sensitive attributes (default: all)")->delimiter(',');

  auto* ablate = app.add_subcommand("ablate", "full model against the three ablations");
  add_common(ablate, ablate_o);
  auto* sweep = app.add_subcommand("sweep", "alpha x lr_sp grid");
  add_common(sweep, sweep_o);
  auto* time = app.add_subcommand("time", "wall-clock of k=1 against k=3");
  add_common(time, time_o);
  auto* gen = app.add_subcommand("gen-scm", "write a synthetic graph");
  add_common(gen, gen_o);
  auto* inspect = app.add_subcommand("inspect-partition", "write SAP partitions and agreement");
  add_common(inspect, inspect_o);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*train) {
      auto cfg = resolve(train_o);
      if (!variant.empty()) cfg.variant = variant;
      cfg.validate();
      std::cout << fairinv::cmd_train(cfg, cfg.out).table;
    } else if (*eval) {
      const auto cfg = resolve(eval_o);
      std::cout << fairinv::cmd_eval_multi(cfg, checkpoint, attrs, first_seed(cfg), cfg.out).table;
    } else if (*ablate) {
      const auto cfg = resolve(ablate_o);
      std::cout << fairinv::cmd_ablate(cfg, cfg.out).table;
    } else if (*sweep) {
      const auto cfg = resolve(sweep_o);
      std::cout << fairinv::cmd_sweep(cfg, cfg.out).table;
    } else if (*time) {
      const auto cfg = resolve(time_o);
      std::cout << fairinv::cmd_time(cfg, cfg.out).table;
    } else if (*gen) {
      const auto cfg = resolve(gen_o);
      fairinv::cmd_gen_scm(cfg, first_seed(cfg), cfg.out);
      std::cout << "wrote " << cfg.out << "/scm.*\n";
    } else if (*inspect) {
      const auto cfg = resolve(inspect_o);
      std::cout << fairinv::cmd_inspect_partition(cfg, first_seed(cfg), cfg.out);
    }
  } catch (const fairinv::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const fairinv::DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return 3;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
