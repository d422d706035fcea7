#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wq/harness.hpp"

int main(int argc, char** argv) {
  CLI::App app{"weighted Q-learning experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_override, summary_dir, summary_out;
  std::vector<std::string> overrides;
  long seed_override = -1;
  int window = 1;

  auto* run = app.add_subcommand("run", "run the experiment described by a config file");
  run->add_option("config", config_path, "flat key = value config file")->required();
  run->add_option("--seed", seed_override, "replace the config's seed list with one seed");
  run->add_option("--out", out_override, "output directory override");
  run->add_option("--override", overrides, "extra key=value settings applied after the file");

  auto* summarize = app.add_subcommand("summarize", "aggregate metrics CSVs across seeds");
  summarize->add_option("dir", summary_dir, "directory holding per-seed metrics CSVs")->required();
  summarize->add_option("--window", window, "moving-average window over epochs");
  summarize->add_option("--out", summary_out, "write the summary CSV here instead of stdout");

  auto* profiles = app.add_subcommand("profiles", "list the built-in hyperparameter profiles");
  auto* selftest = app.add_subcommand("selftest", "quick internal consistency checks");

  CLI11_PARSE(app, argc, argv);

  try {
    if (run->parsed()) {
      wq::harness::ExperimentConfig cfg = wq::harness::parse_config(config_path);
      for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("--override expects key=value: " + ov);
        wq::harness::apply_override(cfg, ov.substr(0, eq), ov.substr(eq + 1));
      }
      if (seed_override >= 0)
        wq::harness::apply_override(cfg, "seeds", std::to_string(seed_override));
      if (!out_override.empty()) wq::harness::apply_override(cfg, "out", out_override);
      return wq::harness::run_experiment(cfg);
    }
    if (summarize->parsed()) {
      const auto rows = wq::harness::summarize(summary_dir, window);
      if (!summary_out.empty()) {
        wq::harness::write_summary_csv(rows, summary_out);
      } else {
        std::printf(
            "algorithm,epoch,n_seeds,single_seed,eval_mean,eval_ci,predicted_mean,"
            "predicted_ci,realized_mean,realized_ci\n");
        for (const auto& r : rows)
          std::printf("%s,%ld,%d,%d,%s,%s,%s,%s,%s,%s\n", r.algorithm.c_str(), r.epoch,
                      r.n_seeds, r.single_seed ? 1 : 0,
                      wq::harness::fmt_double(r.eval_mean).c_str(),
                      wq::harness::fmt_double(r.eval_ci).c_str(),
                      wq::harness::fmt_double(r.predicted_mean).c_str(),
                      wq::harness::fmt_double(r.predicted_ci).c_str(),
                      wq::harness::fmt_double(r.realized_mean).c_str(),
                      wq::harness::fmt_double(r.realized_ci).c_str());
      }
      return 0;
    }
    if (profiles->parsed()) {
      for (const auto& name : wq::harness::profile_names()) std::printf("%s\n", name.c_str());
      return 0;
    }
    if (selftest->parsed()) return wq::harness::selftest();
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
