#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "collapsar/app.hpp"

int main(int argc, char** argv) {
  CLI::App cli{"collapsar: self-similar collapse profiles, invariant checks and stability probes"};
  cli.require_subcommand(1);

  auto* run = cli.add_subcommand("run", "Run a JSON config and write artifacts");
  std::string config;
  std::optional<unsigned> jobs;
  std::optional<std::string> output;
  std::optional<double> y_end;
  bool no_plots = false;
  run->add_option("config", config, "Run configuration (JSON)")->required();
  run->add_option("--jobs", jobs, "Concurrent sweep members")->check(CLI::PositiveNumber);
  run->add_option("--output", output, "Output directory (overrides output_dir)");
  run->add_option("--y-end", y_end, "Override integrator.y_end")->check(CLI::PositiveNumber);
  run->add_flag("--no-plots", no_plots, "Skip plot.svg");

  auto* regress = cli.add_subcommand("regress", "Compare a golden corpus against fresh runs");
  std::string corpus;
  bool bless = false;
  regress->add_option("corpus", corpus, "Corpus directory")->required();
  regress->add_flag("--bless", bless, "Rewrite the expected values from fresh runs");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : collapsar::app::kConfigError;
  }

  if (run->parsed()) {
    collapsar::app::RunOptions opt;
    opt.jobs = jobs;
    opt.output = output;
    opt.y_end = y_end;
    opt.plots = !no_plots;
    return collapsar::app::run(config, opt, std::cout, std::cerr);
  }
  if (bless) {
    try {
      collapsar::app::bless_corpus(corpus);
    } catch (const collapsar::app::ConfigInvalid& e) {
      std::cerr << collapsar::app::config_error_json(e).dump(2) << "\n";
      return collapsar::app::kConfigError;
    }
  }
  return collapsar::app::regress(corpus, std::cout, std::cerr);
}
