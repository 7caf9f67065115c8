// sfoda: command-line driver.
//
//   sfoda generate     --config run.cfg --out out/
//   sfoda train-source --config run.cfg --out out/
//   sfoda adapt        --config run.cfg --out out/
//   sfoda eval         --config run.cfg --out out/
//   sfoda ablate | sweep | verify
//
// Exit codes: 0 ok, 2 config error, 3 data error, 4 numeric failure.

#include <cstdint>
#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "sfoda/config.hpp"
#include "sfoda/error.hpp"
#include "sfoda/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Options {
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> jobs;
};

sfoda::RunConfig resolve_config(const Options& o) {
  sfoda::RunConfig cfg = o.config_path.empty() ? sfoda::parse_config("") : sfoda::load_config(o.config_path);
  if (o.seed) cfg.seed = *o.seed;
  if (o.jobs) {
    if (*o.jobs == 0) throw sfoda::ConfigError("--jobs must be >= 1");
    cfg.jobs = *o.jobs;
  }
  if (!o.out_dir.empty()) cfg.output_dir = o.out_dir;
  return cfg;
}

void print_summary(const std::vector<sfoda::SweepRow>& rows) {
  for (const auto& r : rows) {
    std::printf("%-12s %-14s n=%zu  OS %.4f±%.4f  OS* %.4f±%.4f  Acc %.4f±%.4f\n", r.parameter.c_str(),
                r.value.c_str(), r.n, r.os.mean, r.os.std, r.os_star.mean, r.os_star.std, r.acc.mean, r.acc.std);
  }
}

int run(const std::string& command, const Options& o) {
  const sfoda::RunConfig cfg = resolve_config(o);
  const sfoda::fs::path out = cfg.output_dir;
  if (command == "generate") {
    sfoda::cmd_generate(cfg, out);
  } else if (command == "train-source") {
    sfoda::cmd_train_source(cfg, sfoda::default_train_source_inputs(cfg, out), out);
  } else if (command == "adapt") {
    sfoda::cmd_adapt(cfg, sfoda::default_adapt_inputs(cfg, out), out);
  } else if (command == "eval") {
    const auto r = sfoda::cmd_eval(cfg, sfoda::default_eval_inputs(cfg, out), out);
    std::printf("OS %.4f  OS* %.4f  Acc %.4f  unknown %.4f\n", r.os, r.os_star, r.total_acc, r.unknown_acc());
  } else if (command == "ablate") {
    print_summary(sfoda::cmd_ablate(cfg, out).summary);
  } else if (command == "sweep") {
    print_summary(sfoda::cmd_sweep(cfg, out).summary);
  } else if (command == "verify") {
    const auto report = sfoda::cmd_verify(out);
    for (const auto& c : report.checks) {
      std::printf("%-22s %s  %zu instances, %zu failures, worst %.3g, %.2fs%s%s\n", c.name.c_str(),
                  c.passed ? "PASS" : "FAIL", c.instances, c.failures, c.worst, c.seconds,
                  c.detail.empty() ? "" : "  ", c.detail.c_str());
    }
    if (!report.passed()) return kNumeric;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Source-free open-set domain adaptation at desk scale"};
  app.require_subcommand(1);
  Options opts;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "configuration file");
    sub->add_option("--out", opts.out_dir, "output directory (overrides output_dir)");
    sub->add_option("--seed", seed, "global seed (overrides the config)");
    sub->add_option("--jobs", jobs, "parallel worker count for ablate and sweep");
  };
  const char* commands[][2] = {
      {"generate", "write synthetic source/target CSVs and a manifest"},
      {"train-source", "train the source classifier"},
      {"adapt", "adapt the source checkpoint to the unlabeled target"},
      {"eval", "evaluate the adapted model against hidden target labels"},
      {"ablate", "pl / tc / full over several seeds"},
      {"sweep", "sensitivity grid over one parameter"},
      {"verify", "run the oracle suite"},
  };
  for (const auto& c : commands) add_common(app.add_subcommand(c[0], c[1]));

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kConfig;
  }
  const CLI::App* sub = app.get_subcommands().front();
  if (sub->count("--seed")) opts.seed = seed;
  if (sub->count("--jobs")) opts.jobs = jobs;

  try {
    return run(sub->get_name(), opts);
  } catch (const sfoda::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const sfoda::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const sfoda::UndefinedMetricError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const sfoda::DimensionError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const sfoda::NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const sfoda::AdaptationPreconditionError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return kNumeric;
  } catch (const sfoda::ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kNumeric;
  }
}
