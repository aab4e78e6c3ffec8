#include <doctest.h>

#include <filesystem>

#include "featdiff/config.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/harness.hpp"
#include "featdiff/metrics.hpp"

using namespace featdiff;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_synthetic(const fs::path& dir) {
  ExperimentConfig c;
  c.dataset = "synthetic";
  c.synthetic_kind = "anisotropic";
  c.synthetic_dim = 8;
  c.synthetic_classes = 4;
  c.synthetic_train_per_class = 120;
  c.synthetic_test_per_class = 60;
  c.initial_classes = 2;
  c.phases = 2;
  c.order_seed = 3;
  c.diffusion.iterations = 60;
  c.diffusion.lr = 2e-3;
  c.unet_widths = {8, 8, 16, 16, 32};
  c.classifier.epochs = 4;
  c.output_dir = dir.string();
  return c;
}

}  // namespace

TEST_CASE("config text round trip is exact") {
  ExperimentConfig c;
  c.diffusion.lr = 0.1 + 0.2;
  c.classifier.lr = 1.0 / 3.0;
  c.unet_widths = {8, 16, 24, 32, 40};
  c.shapes.noise = 0.12;
  c.augmentation.mean = {0.1f, 0.2f, 0.3f};
  const auto back = ExperimentConfig::from_text(c.to_text());
  CHECK(back.to_text() == c.to_text());
  CHECK(back.diffusion.lr == c.diffusion.lr);
  CHECK(back.classifier.lr == c.classifier.lr);
  CHECK(back.unet_widths == c.unet_widths);
  for (const auto& k : ExperimentConfig::keys()) CHECK(back.get(k) == c.get(k));
}

TEST_CASE("config keys and validation") {
  ExperimentConfig c;
  c.set("phases", "10");
  CHECK(c.phases == 10);
  c.set("diffusion.guidance_scale", "2.5");
  CHECK(c.diffusion.guidance_scale == 2.5);
  CHECK_THROWS_AS(c.set("no.such.key", "1"), ConfigError);
  CHECK_THROWS_AS(c.set("phases", "ten"), ConfigError);
  c.phases = 3;  // 50 remaining classes do not split into 3
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.phases = 5;
  c.replay_source = "oracle";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  CHECK(ExperimentConfig::from_text("# comment\nphases = 10\n\ninitial_classes=50\n").phases == 10);
}

TEST_CASE("shipped configs parse and validate") {
  const fs::path dir = FEATDIFF_SOURCE_DIR "/configs";
  int n = 0;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.path().extension() != ".txt") continue;
    CAPTURE(e.path().string());
    auto c = ExperimentConfig::load(e.path());
    CHECK_NOTHROW(c.validate());
    ++n;
  }
  CHECK(n >= 5);
}

TEST_CASE("synthetic run: deterministic, resumable and re-evaluable") {
  const auto base = fs::temp_directory_path() / "featdiff_pipeline_test";
  fs::remove_all(base);
  const auto a = run_experiment(tiny_synthetic(base / "a"), false);
  const auto b = run_experiment(tiny_synthetic(base / "b"), false);
  REQUIRE(a.phase_accuracy.size() == 3);
  CHECK(a.phase_accuracy == b.phase_accuracy);
  CHECK(a.average_forgetting == b.average_forgetting);
  CHECK(a.phase_accuracy[0] > 90.0);
  for (const char* f : {"config.txt", "manifests.txt", "metrics.tsv", "accuracy.png", "old_new.png",
                        "phase_1/generator.bin", "phase_2/classifier.bin", "phase_2/replay.fdfc"})
    CHECK(fs::exists(base / "a" / f));

  // a fresh run refuses an existing directory
  CHECK_THROWS(run_experiment(tiny_synthetic(base / "a"), false));

  // drop the last phase's classifier and evaluation; resume recomputes them
  for (const auto& e : fs::directory_iterator(base / "a" / "phase_2"))
    if (e.path().filename().string().starts_with("classifier") || e.path().filename().string().starts_with("eval"))
      fs::remove(e.path());
  const auto r = run_experiment(tiny_synthetic(base / "a"), true);
  CHECK(r.phase_accuracy == a.phase_accuracy);

  const auto ev = evaluate_run(base / "a");
  CHECK(ev.phase_accuracy == a.phase_accuracy);
  CHECK(ev.matrix.at(2, 0) == a.matrix.at(2, 0));
  fs::remove_all(base);
}

TEST_CASE("gaussian and real replay sources run on the same experiment") {
  const auto dir = fs::temp_directory_path() / "featdiff_sources_test";
  fs::remove_all(dir);
  Experiment ex(tiny_synthetic(dir), false);
  auto opts = ProtocolOptions::from_config(ex.config());
  opts.source = ReplaySource::Real;
  const auto real = ex.run_protocol(opts, false);
  opts.source = ReplaySource::Gaussian;
  const auto gauss = ex.run_protocol(opts, false);
  opts.masked_baseline = true;
  const auto masked = ex.run_protocol(opts, false);
  CHECK(real.phase_accuracy.back() >= masked.phase_accuracy.back());
  CHECK(gauss.phase_accuracy.back() >= masked.phase_accuracy.back());
  auto replay = ex.replay(2, ProtocolOptions::from_config(ex.config()));
  CHECK(replay.classes() == std::vector<int>{0, 1, 2});
  CHECK_THROWS_AS(parse_replay_source("oracle"), ConfigError);
  fs::remove_all(dir);
}

TEST_CASE("plots need a metrics report") {
  const auto dir = fs::temp_directory_path() / "featdiff_plot_test";
  fs::create_directories(dir);
  CHECK_THROWS_AS(emit_plots(dir), IoError);
  fs::remove_all(dir);
}
