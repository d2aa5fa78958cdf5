#include <CLI11.hpp>
#include <iostream>

#include "mfcoulomb/runner.hpp"

namespace {

int guarded(const std::function<int()>& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return mfc::runner::exit_code(e);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mean-field Coulomb particle simulator and verification harness"};
  app.require_subcommand(1);

  std::string config, out;
  unsigned workers = 1;
  std::uint64_t seed_offset = 0;

  auto* run = app.add_subcommand("run", "Run the experiment described by a config file");
  run->add_option("--config", config, "Config file (key = value)")->required();
  run->add_option("--out", out, "Output directory (overrides output_dir)");
  run->add_option("--workers", workers, "Seed-parallel workers")->check(CLI::Range(1u, 1024u));
  run->add_option("--seed-offset", seed_offset, "Added to every seed");

  auto* rep = app.add_subcommand("report", "Aggregate a results directory");
  rep->add_option("--out", out, "Results directory")->required();

  auto* val = app.add_subcommand("validate", "Check a config without running it");
  val->add_option("--config", config, "Config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  if (*run) {
    return guarded([&] {
      const auto cfg = mfc::runner::load_config(config);
      mfc::runner::RunOptions opt;
      opt.out = out;
      opt.workers = workers;
      opt.seed_offset = seed_offset;
      const auto sum = mfc::runner::run(cfg, opt);
      std::cout << "wrote " << sum.files.size() << " files to " << sum.directory.string() << " in " << sum.wall_seconds
                << " s\n";
      return 0;
    });
  }
  if (*rep) {
    return guarded([&] {
      mfc::runner::report(out, std::cout);
      return 0;
    });
  }
  return guarded([&] {
    const auto cfg = mfc::runner::load_config(config);
    mfc::runner::validate(cfg);
    std::cout << "config ok: " << mfc::runner::to_string(cfg.experiment) << "\n";
    return 0;
  });
}
