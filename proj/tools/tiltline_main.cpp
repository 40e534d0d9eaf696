#include <CLI11.hpp>
#include <cstdlib>
#include <iostream>
#include <sstream>

#include "tiltline/experiments.hpp"

namespace ex = tiltline::experiments;

int main(int argc, char** argv) {
  CLI::App app{"Simulator and test harness for area-tilted non-intersecting Brownian bridges"};
  app.require_subcommand(1);

  ex::RunOptions run;
  std::uint64_t seed = 0;
  std::size_t workers = 0;
  std::string out, resume;
  auto* r = app.add_subcommand("run", "Run an experiment described by a JSON config");
  r->add_option("--config", run.config_path, "Experiment config (JSON)")
      ->required()
      ->envname("TILTLINE_CONFIG");
  r->add_option("--set", run.overrides, "Override KEY=VALUE with a dotted key (repeatable)");
  auto* out_opt = r->add_option("--out", out, "Output directory")->envname("TILTLINE_OUT");
  auto* seed_opt = r->add_option("--seed", seed, "Base seed")->envname("TILTLINE_SEED");
  auto* workers_opt =
      r->add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber)->envname("TILTLINE_WORKERS");
  auto* resume_opt =
      r->add_option("--resume", resume, "Checkpoint to resume from")->envname("TILTLINE_RESUME");

  std::string a_dir, b_dir, cmp_out;
  double threshold = 0.01;
  auto* c = app.add_subcommand("compare", "KS comparison of two run directories");
  c->add_option("a", a_dir, "First run directory")->required();
  c->add_option("b", b_dir, "Second run directory")->required();
  auto* cmp_out_opt = c->add_option("--out", cmp_out, "Directory for compare.csv and compare.svg");
  c->add_option("--threshold", threshold, "KS distance threshold");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : ex::kConfigError;
  }

  if (*r) {
    if (const char* env = std::getenv("TILTLINE_SET"); env && run.overrides.empty()) {
      std::stringstream ss(env);
      std::string item;
      while (std::getline(ss, item, ';')) {
        if (!item.empty()) run.overrides.push_back(item);
      }
    }
    if (*out_opt) run.out = out;
    if (*seed_opt) run.seed = seed;
    if (*workers_opt) run.workers = workers;
    if (*resume_opt) run.resume = resume;
    return ex::run(run, std::cout, std::cerr);
  }
  std::optional<std::string> dir;
  if (*cmp_out_opt) dir = cmp_out;
  return ex::compare(a_dir, b_dir, dir, threshold, std::cout, std::cerr);
}
