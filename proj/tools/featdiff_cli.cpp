#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "featdiff/config.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/harness.hpp"
#include "featdiff/log.hpp"

namespace fs = std::filesystem;
using namespace featdiff;

namespace {

// Command-line flags that mirror a config key.
struct FlagOverrides {
  std::optional<std::string> dataset, data_root, output_dir, baseline, replay_source, backbone;
  std::optional<int> phases, initial_classes, diffusion_steps, sampling_steps, phase_epochs, extractor_epochs;
  std::optional<double> guidance_scale, cond_drop_prob, phase_lr;
  std::optional<std::int64_t> replay_per_class, diffusion_iterations;
  std::vector<std::string> sets;

  void attach(CLI::App* app) {
    app->add_option("--dataset", dataset, "cifar10 | cifar100 | shapes10 | synthetic");
    app->add_option("--data-root", data_root, "Directory holding the dataset files");
    app->add_option("--output-dir", output_dir, "Run directory");
    app->add_option("--phases", phases, "Number of incremental phases T");
    app->add_option("--initial-classes", initial_classes, "Classes in phase 0");
    app->add_option("--backbone", backbone, "resnet18 | small_cnn");
    app->add_option("--extractor-epochs", extractor_epochs, "Phase-0 pretraining epochs");
    app->add_option("--diffusion-steps", diffusion_steps, "Diffusion steps K used in training");
    app->add_option("--diffusion-iterations", diffusion_iterations, "Generator training iterations per phase");
    app->add_option("--sampling-steps", sampling_steps, "Denoising steps at sampling time (<= K)");
    app->add_option("--guidance-scale", guidance_scale, "Classifier-free guidance scale");
    app->add_option("--cond-drop-prob", cond_drop_prob, "Condition dropout probability during training");
    app->add_option("--phase-epochs", phase_epochs, "Classifier epochs per phase");
    app->add_option("--phase-lr", phase_lr, "Classifier initial learning rate");
    app->add_option("--replay-per-class", replay_per_class, "Generated features per old class (0 = match real)");
    app->add_option("--replay-source", replay_source, "diffusion | gaussian | real");
    app->add_option("--baseline", baseline, "replay | masked")->check(CLI::IsMember({"replay", "masked"}));
    app->add_option("--set", sets, "Any config key, as key=value (repeatable)");
  }

  void apply(ExperimentConfig& c) const {
    auto put = [&c](const char* key, const auto& v) {
      if (!v) return;
      if constexpr (std::is_same_v<std::decay_t<decltype(*v)>, std::string>) {
        c.set(key, *v);
      } else {
        std::ostringstream os;
        os.precision(17);
        os << *v;
        c.set(key, os.str());
      }
    };
    put("dataset", dataset);
    put("data_root", data_root);
    put("output_dir", output_dir);
    put("phases", phases);
    put("initial_classes", initial_classes);
    put("extractor.backbone", backbone);
    put("extractor.epochs", extractor_epochs);
    put("diffusion.steps", diffusion_steps);
    put("diffusion.iterations", diffusion_iterations);
    put("diffusion.sampling_steps", sampling_steps);
    put("diffusion.guidance_scale", guidance_scale);
    put("diffusion.cond_drop_prob", cond_drop_prob);
    put("classifier.epochs", phase_epochs);
    put("classifier.lr", phase_lr);
    put("replay.per_class", replay_per_class);
    put("replay.source", replay_source);
    put("replay.baseline", baseline);
    for (const auto& kv : sets) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
  }
};

void print_report(const MetricsReport& r) {
  for (std::size_t t = 0; t < r.phase_accuracy.size(); ++t) {
    std::printf("phase %zu  accuracy %.2f", t, r.phase_accuracy[t]);
    if (t > 0) std::printf("  forgetting %.2f", r.phase_forgetting[t]);
    std::printf("\n");
  }
  std::printf("average incremental accuracy %.1f\n", r.average_accuracy);
  if (r.phase_accuracy.size() > 1) std::printf("average forgetting %.2f\n", r.average_forgetting);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-exemplar class-incremental learning with diffusion feature replay"};
  app.require_subcommand(1);
  bool verbose = false;
  app.add_flag("-v,--verbose", verbose, "Debug logging");

  auto* run = app.add_subcommand("run", "Run an experiment from a config file");
  std::string config_path;
  FlagOverrides run_flags;
  run->add_option("-c,--config", config_path, "Config file (key = value lines)");
  run_flags.attach(run);
  bool dump_config = false;
  run->add_flag("--print-config", dump_config, "Print the resolved config and exit");

  auto* resume = app.add_subcommand("resume", "Continue a run from its last finished stage");
  std::string resume_dir;
  resume->add_option("run_dir", resume_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* eval = app.add_subcommand("eval", "Recompute metrics of a run from its checkpoints");
  std::string eval_dir;
  eval->add_option("run_dir", eval_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* plot = app.add_subcommand("plot", "Draw accuracy curves from a run's metrics report");
  std::string plot_dir;
  plot->add_option("run_dir", plot_dir, "Run directory")->required()->check(CLI::ExistingDirectory);

  auto* synth = app.add_subcommand("synthetic", "Write a synthetic feature set, or run the generator oracle");
  std::string kind = "banana", out_path;
  int dim = 2, classes = 1;
  std::int64_t per_class = 50000, eval_count = 2000, iterations = 4000;
  std::uint64_t seed = 0;
  bool oracle = false;
  synth->add_option("--kind", kind, "isotropic | anisotropic | banana | mixture");
  synth->add_option("--dim", dim, "Dimension");
  synth->add_option("--classes", classes, "Number of classes");
  synth->add_option("--per-class", per_class, "Samples per class");
  synth->add_option("--seed", seed, "Seed");
  synth->add_option("-o,--out", out_path, "Feature cache to write");
  synth->add_flag("--oracle", oracle, "Train a generator and compare its MMD with the Gaussian prototype");
  synth->add_option("--eval-count", eval_count, "Held-out and generated sample count for the oracle");
  synth->add_option("--iterations", iterations, "Generator iterations for the oracle");

  CLI11_PARSE(app, argc, argv);
  if (verbose) log::set_threshold(log::Level::Debug);

  try {
    if (*run) {
      ExperimentConfig config = config_path.empty() ? ExperimentConfig{} : ExperimentConfig::load(config_path);
      run_flags.apply(config);
      config.validate();
      if (dump_config) {
        std::cout << config.to_text();
        return 0;
      }
      print_report(run_experiment(config, /*resume=*/false));
      std::printf("run directory: %s\n", config.output_dir.c_str());
    } else if (*resume) {
      auto config = ExperimentConfig::load(fs::path(resume_dir) / "config.txt");
      config.output_dir = resume_dir;
      print_report(run_experiment(config, /*resume=*/true));
    } else if (*eval) {
      print_report(evaluate_run(eval_dir));
    } else if (*plot) {
      emit_plots(plot_dir);
      std::printf("wrote %s and %s\n", (fs::path(plot_dir) / "accuracy.png").c_str(),
                  (fs::path(plot_dir) / "old_new.png").c_str());
    } else if (*synth) {
      const auto k = parse_synthetic_kind(kind);
      if (oracle) {
        ShapeOracleOptions o;
        o.kind = k;
        o.dim = dim;
        o.train_count = per_class;
        o.eval_count = eval_count;
        o.diffusion.iterations = iterations;
        o.seed = seed;
        const auto r = run_shape_oracle(o);
        std::printf("mmd generated %.6f (se %.6f)\n", r.generated.estimate, r.generated.standard_error);
        std::printf("mmd gaussian  %.6f (se %.6f)\n", r.gaussian.estimate, r.gaussian.standard_error);
        return r.generated.estimate < r.gaussian.estimate ? 0 : 3;
      }
      if (out_path.empty()) throw ArgumentError("synthetic needs --out unless --oracle is given");
      const auto set = sample_synthetic(default_synthetic_spec(k, dim, classes, per_class, seed));
      save_feature_cache(out_path, set);
      std::printf("wrote %lld features of dimension %d to %s\n", static_cast<long long>(set.size()), dim,
                  out_path.c_str());
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
