#include "featdiff/harness.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "featdiff/errors.hpp"
#include "featdiff/log.hpp"
#include "featdiff/noise_schedule.hpp"
#include "featdiff/plots.hpp"
#include "featdiff/random.hpp"
#include "featdiff/shapes_dataset.hpp"

namespace featdiff {
namespace fs = std::filesystem;

ReplaySource parse_replay_source(const std::string& name) {
  if (name == "diffusion") return ReplaySource::Diffusion;
  if (name == "gaussian") return ReplaySource::Gaussian;
  if (name == "real") return ReplaySource::Real;
  throw ConfigError("unknown replay source '" + name + "'");
}

std::string to_string(ReplaySource source) {
  switch (source) {
    case ReplaySource::Diffusion: return "diffusion";
    case ReplaySource::Gaussian: return "gaussian";
    case ReplaySource::Real: return "real";
  }
  return "?";
}

ProtocolOptions ProtocolOptions::from_config(const ExperimentConfig& config) {
  ProtocolOptions o;
  o.source = parse_replay_source(config.replay_source);
  o.masked_baseline = config.baseline == "masked";
  o.sampling_steps = config.diffusion.sampling_steps;
  o.guidance_scale = config.diffusion.guidance_scale;
  o.per_class = config.replay_per_class;
  o.classifier = config.classifier;
  return o;
}

namespace {

/// Runs `body`, tagging any failure with the phase and stage.
template <typename F>
decltype(auto) stage(int t, const char* name, F&& body) {
  try {
    return body();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(t, name, e.what());
  }
}

FeatureSet rows_of_classes(const FeatureSet& set, const std::vector<int>& classes, int phase) {
  auto mask = torch::zeros({set.size()}, torch::kBool);
  for (int c : classes) mask = mask | (set.labels == c);
  FeatureSet out;
  out.features = set.features.index({mask});
  out.labels = set.labels.index({mask});
  out.phase = phase;
  return out;
}

std::int64_t count_in(const torch::Tensor& labels, const std::vector<int>& classes) {
  std::int64_t n = 0;
  for (int c : classes) n += (labels == c).sum().item<std::int64_t>();
  return n;
}

}  // namespace

Experiment::Experiment(ExperimentConfig config, bool resume)
    : config_(std::move(config)), root_(config_.output_dir), resume_(resume) {
  config_.validate();
  fs::create_directories(root_);
  config_.save(root_ / "config.txt");
  const int n = config_.num_classes();
  train_manifests_ = build_phase_splits(n, config_.initial_classes, config_.phases, config_.order_seed);
  test_manifests_ = train_manifests_;
  for (auto& m : test_manifests_) m.split = Split::Test;
  for (const auto& m : train_manifests_) {
    for (int c : m.classes) class_phase_[c] = m.phase;
  }
  for (int t = 0; t < phase_count(); ++t) fs::create_directories(phase_dir(t));
}

fs::path Experiment::phase_dir(int t) const { return root_ / ("phase_" + std::to_string(t)); }

int Experiment::phase_of(int class_id) const {
  auto it = class_phase_.find(class_id);
  if (it == class_phase_.end()) throw ArgumentError("class " + std::to_string(class_id) + " is not in any phase");
  return it->second;
}

bool Experiment::done(int t, const std::string& name) const {
  return resume_ && fs::exists(phase_dir(t) / (name + ".done"));
}

void Experiment::mark(int t, const std::string& name) const {
  std::ofstream os(phase_dir(t) / (name + ".done"));
  os << "ok\n";
}

void Experiment::ensure_images() {
  if (train_images_ || synthetic_train_) return;
  const auto& c = config_;
  const auto ordering = ClassOrdering::make(c.num_classes(), c.order_seed);
  if (c.dataset == "synthetic") {
    auto spec = default_synthetic_spec(parse_synthetic_kind(c.synthetic_kind), c.synthetic_dim, c.synthetic_classes,
                                       c.synthetic_train_per_class, derive_seed(c.synthetic_seed, "synthetic-train"));
    auto remap = [&](FeatureSet set) {
      const auto inv = ordering.inverse();
      auto lut = torch::tensor(std::vector<std::int64_t>(inv.begin(), inv.end()), torch::kInt64);
      set.labels = lut.index_select(0, set.labels);
      return set;
    };
    synthetic_train_ = remap(sample_synthetic(spec));
    spec.per_class = c.synthetic_test_per_class;
    spec.seed = derive_seed(c.synthetic_seed, "synthetic-test");
    synthetic_test_ = remap(sample_synthetic(spec));
  } else {
    ImageDataset train, test;
    if (c.dataset == "shapes10") {
      train = make_shapes10(c.shapes, Split::Train, c.shapes_seed);
      auto test_cfg = c.shapes;
      if (c.test_per_class > 0) test_cfg.per_class = c.test_per_class;
      test = make_shapes10(test_cfg, Split::Test, c.shapes_seed);
    } else if (c.dataset == "cifar10") {
      train = load_cifar10(c.data_root, Split::Train);
      test = load_cifar10(c.data_root, Split::Test);
    } else {
      train = load_cifar100(c.data_root, Split::Train);
      test = load_cifar100(c.data_root, Split::Test);
    }
    train_images_ = train.remap(ordering).subsample(c.train_per_class);
    test_images_ = test.remap(ordering).subsample(c.test_per_class);
  }
  const auto& train_labels = synthetic_train_ ? synthetic_train_->labels : train_images_->labels;
  const auto& test_labels = synthetic_test_ ? synthetic_test_->labels : test_images_->labels;
  for (auto& m : train_manifests_) m.sample_count = count_in(train_labels, m.classes);
  for (auto& m : test_manifests_) m.sample_count = count_in(test_labels, m.classes);
  auto all = train_manifests_;
  all.insert(all.end(), test_manifests_.begin(), test_manifests_.end());
  write_manifests(root_ / "manifests.txt", all);
}

const FrozenExtractor& Experiment::extractor() {
  if (extractor_) return *extractor_;
  return stage(0, "extractor", [&]() -> const FrozenExtractor& {
    if (config_.dataset == "synthetic") throw ConfigError("synthetic runs have no image extractor");
    const auto path = phase_dir(0) / "extractor.bin";
    if (done(0, "extractor")) {
      extractor_ = FrozenExtractor::load(path);
      return *extractor_;
    }
    ensure_images();
    log::info("phase 0: pretraining ", config_.extractor.backbone, " for ", config_.extractor.epochs, " epochs");
    PhaseStream stream(*train_images_, train_manifests_[0], config_.augmentation, config_.extractor.batch_size,
                       derive_seed(config_.extractor.seed, "extractor-stream"));
    auto trained = train_extractor(config_.extractor, stream, static_cast<std::int64_t>(train_manifests_[0].classes.size()));
    trained.extractor.save(path);
    {
      std::ofstream os(phase_dir(0) / "extractor_loss.tsv");
      os << "epoch\tloss\n";
      for (std::size_t e = 0; e < trained.epoch_losses.size(); ++e) os << e + 1 << '\t' << trained.epoch_losses[e] << '\n';
    }
    mark(0, "extractor");
    extractor_ = trained.extractor;
    return *extractor_;
  });
}

void Experiment::ensure_features(int t) {
  if (train_features_.count(t)) return;
  stage(t, "features", [&] {
    const auto dir = phase_dir(t);
    if (done(t, "features")) {
      train_features_[t] = load_feature_cache(dir / "train_features.fdfc");
      test_features_[t] = load_feature_cache(dir / "test_features.fdfc");
    } else {
      ensure_images();
      const auto& train_m = train_manifests_.at(static_cast<std::size_t>(t));
      const auto& test_m = test_manifests_.at(static_cast<std::size_t>(t));
      if (config_.dataset == "synthetic") {
        train_features_[t] = rows_of_classes(*synthetic_train_, train_m.classes, t);
        test_features_[t] = rows_of_classes(*synthetic_test_, test_m.classes, t);
      } else {
        const auto& ex = extractor();
        train_features_[t] =
            extract_features(ex, *train_images_, train_m, config_.augmentation, config_.extractor.feature_dim);
        test_features_[t] =
            extract_features(ex, *test_images_, test_m, config_.augmentation, config_.extractor.feature_dim);
      }
      save_feature_cache(dir / "train_features.fdfc", train_features_[t]);
      save_feature_cache(dir / "test_features.fdfc", test_features_[t]);
      mark(t, "features");
    }
    train_features_[t].phase = t;
    test_features_[t].phase = t;
  });
}

const FeatureSet& Experiment::train_features(int t) {
  ensure_features(t);
  return train_features_.at(t);
}

const FeatureSet& Experiment::test_features(int t) {
  ensure_features(t);
  return test_features_.at(t);
}

const StatsTable& Experiment::stats(int t) {
  if (auto it = stats_.find(t); it != stats_.end()) return it->second;
  const auto& feats = train_features(t);
  return stage(t, "stats", [&]() -> const StatsTable& {
    const auto path = phase_dir(t) / "stats.bin";
    if (done(t, "stats")) {
      stats_[t] = load_stats(path);
    } else {
      stats_[t] = compute_stats(feats);
      save_stats(path, stats_[t]);
      mark(t, "stats");
    }
    return stats_[t];
  });
}

const GeneratorCheckpoint& Experiment::generator(int t) {
  if (auto it = generators_.find(t); it != generators_.end()) return it->second;
  const auto& feats = train_features(t);
  const auto& table = stats(t);
  return stage(t, "generator", [&]() -> const GeneratorCheckpoint& {
    const auto path = phase_dir(t) / "generator.bin";
    if (done(t, "generator")) {
      generators_.emplace(t, GeneratorCheckpoint::load(path));
      return generators_.at(t);
    }
    const auto n_classes = static_cast<std::int64_t>(train_manifests_.at(static_cast<std::size_t>(t)).classes.size());
    const bool doubled = t == 0 && config_.unet_double_initial;
    const auto unet = unet_config_for(feats.dim(), n_classes, doubled, config_.unet_widths);
    auto cfg = config_.diffusion;
    cfg.seed = derive_seed(config_.diffusion.seed, "generator", static_cast<std::uint64_t>(t));
    log::info("phase ", t, ": training generator on ", feats.size(), " features of ", n_classes, " classes for ",
              cfg.iterations, " iterations");
    auto ckpt = train_generator(normalize_by_class(feats, table), make_schedule(cfg.steps), unet, cfg, t);
    ckpt.save(path);
    mark(t, "generator");
    generators_.emplace(t, std::move(ckpt));
    return generators_.at(t);
  });
}

FeatureSet Experiment::replay(int t, const ProtocolOptions& options) {
  if (t == 0) return {};
  std::int64_t per_class = options.per_class;
  if (per_class <= 0) {
    const auto counts = train_features(t).class_counts();
    double mean = 0.0;
    for (auto c : counts) mean += static_cast<double>(c);
    per_class = std::max<std::int64_t>(1, std::llround(mean / static_cast<double>(counts.size())));
  }
  std::vector<FeatureSet> parts;
  for (int s = 0; s < t; ++s) {
    for (int c : train_manifests_.at(static_cast<std::size_t>(s)).classes) {
      const auto seed = derive_seed(config_.diffusion.seed, "replay-" + std::to_string(t), static_cast<std::uint64_t>(c));
      FeatureSet part;
      switch (options.source) {
        case ReplaySource::Diffusion: {
          const auto& gen = generator(s);
          const auto& st = stats(s).at(c);
          part.features = denormalize_by_class(
              sample_features(gen, c, per_class, options.sampling_steps, options.guidance_scale, seed), st);
          break;
        }
        case ReplaySource::Gaussian:
          part.features = gaussian_prototype_baseline(stats(s).at(c), per_class, seed);
          break;
        case ReplaySource::Real:
          part.features = train_features(s).of_class(c);
          break;
      }
      part.features = part.features.to(torch::kFloat32);
      part.labels = torch::full({part.features.size(0)}, static_cast<std::int64_t>(c), torch::kInt64);
      parts.push_back(std::move(part));
    }
  }
  auto out = concat(parts);
  out.phase = t;
  return out;
}

namespace {

void write_eval(const fs::path& path, const PhaseEvaluation& ev) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write " + path.string());
  os.precision(17);
  os << "overall\t" << ev.overall << '\n';
  for (std::size_t j = 0; j < ev.per_task.size(); ++j) {
    os << "task_" << j << '\t' << ev.per_task[j] << '\t' << ev.task_counts[j] << '\n';
  }
}

PhaseEvaluation read_eval(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open " + path.string());
  PhaseEvaluation ev;
  std::string key;
  while (is >> key) {
    if (key == "overall") {
      is >> ev.overall;
    } else {
      double a = 0.0;
      std::int64_t n = 0;
      is >> a >> n;
      ev.per_task.push_back(a);
      ev.task_counts.push_back(n);
    }
    if (!is) throw IoError("malformed evaluation file " + path.string());
  }
  return ev;
}

}  // namespace

MetricsReport Experiment::run_protocol(const ProtocolOptions& options, bool persist) {
  options.classifier.validate();
  const int phases = phase_count();
  AccuracyMatrix matrix(phases);
  std::vector<std::int64_t> task_samples;
  ClassifierState state = make_classifier(train_features(0).dim());
  std::vector<std::vector<int>> seen_tasks;
  std::vector<FeatureSet> seen_tests;

  for (int t = 0; t < phases; ++t) {
    const auto dir = phase_dir(t);
    const auto& manifest = train_manifests_.at(static_cast<std::size_t>(t));
    seen_tasks.push_back(manifest.classes);
    seen_tests.push_back(test_features(t));
    task_samples.push_back(test_features(t).size());

    const bool need_replay = t > 0 && !options.masked_baseline;
    // Stats and generator of this phase come first so the stage order on
    // disk follows the protocol even though replay only uses earlier phases.
    stats(t);
    if (options.source == ReplaySource::Diffusion && !options.masked_baseline) generator(t);

    if (persist && done(t, "classifier")) {
      state = ClassifierState::load(dir / "classifier.bin");
    } else {
      FeatureSet replayed;
      if (need_replay) {
        replayed = stage(t, "replay", [&] {
          if (persist && done(t, "replay")) return load_feature_cache(dir / "replay.fdfc");
          auto r = replay(t, options);
          if (persist) {
            save_feature_cache(dir / "replay.fdfc", r);
            mark(t, "replay");
          }
          return r;
        });
      }
      state = stage(t, "classifier", [&] {
        auto cfg = options.classifier;
        cfg.seed = derive_seed(options.classifier.seed, "classifier", static_cast<std::uint64_t>(t));
        auto next = extend_classifier(state, manifest.classes,
                                      derive_seed(options.classifier.seed, "head", static_cast<std::uint64_t>(t)));
        next.phase = t;
        next = options.masked_baseline ? train_phase_masked_baseline(std::move(next), train_features(t), cfg)
                                       : train_phase(std::move(next), train_features(t), replayed, cfg);
        if (persist) {
          next.save(dir / "classifier.bin");
          mark(t, "classifier");
        }
        return next;
      });
    }

    const auto ev = stage(t, "eval", [&] {
      if (persist && done(t, "eval")) return read_eval(dir / "eval.tsv");
      auto e = evaluate_phase(state, concat(seen_tests), seen_tasks);
      if (persist) {
        write_eval(dir / "eval.tsv", e);
        mark(t, "eval");
      }
      return e;
    });
    matrix.set_overall(t, ev.overall);
    for (int j = 0; j <= t; ++j) matrix.set(t, j, ev.per_task[static_cast<std::size_t>(j)]);
    log::info("phase ", t, ": accuracy ", ev.overall);
  }
  auto report = summarize(matrix);
  report.task_samples = task_samples;
  return report;
}

MetricsReport run_experiment(const ExperimentConfig& config, bool resume) {
  const fs::path root = config.output_dir;
  if (!resume && fs::exists(root / "config.txt")) {
    throw ConfigError("run directory " + root.string() + " already holds a run; use resume");
  }
  Experiment exp(config, resume);
  auto report = exp.run_protocol(ProtocolOptions::from_config(config), /*persist=*/true);
  write_report(root / "metrics.tsv", report);
  emit_plots(root);
  return report;
}

MetricsReport evaluate_run(const fs::path& run_dir) {
  const auto config = ExperimentConfig::load(run_dir / "config.txt");
  const auto manifests = build_phase_splits(config.num_classes(), config.initial_classes, config.phases,
                                            config.order_seed);
  const int phases = static_cast<int>(manifests.size());
  AccuracyMatrix matrix(phases);
  std::vector<FeatureSet> tests;
  std::vector<std::vector<int>> tasks;
  std::vector<std::int64_t> samples;
  for (int t = 0; t < phases; ++t) {
    const auto dir = run_dir / ("phase_" + std::to_string(t));
    if (!fs::exists(dir / "classifier.done")) {
      throw IoError("phase " + std::to_string(t) + " of " + run_dir.string() + " has no finished classifier");
    }
    tests.push_back(load_feature_cache(dir / "test_features.fdfc"));
    tasks.push_back(manifests[static_cast<std::size_t>(t)].classes);
    samples.push_back(tests.back().size());
    const auto state = ClassifierState::load(dir / "classifier.bin");
    const auto ev = evaluate_phase(state, concat(tests), tasks);
    matrix.set_overall(t, ev.overall);
    for (int j = 0; j <= t; ++j) matrix.set(t, j, ev.per_task[static_cast<std::size_t>(j)]);
  }
  auto report = summarize(matrix);
  report.task_samples = samples;
  write_report(run_dir / "metrics.tsv", report);
  return report;
}

void emit_plots(const fs::path& run_dir) {
  const auto path = run_dir / "metrics.tsv";
  if (!fs::exists(path)) throw IoError("no metrics report at " + path.string());
  const auto report = read_report(path);
  plot_accuracy_curve(report, run_dir / "accuracy.png");
  plot_old_new_curves(report, run_dir / "old_new.png");
}

ShapeOracleResult run_shape_oracle(const ShapeOracleOptions& options) {
  auto spec = default_synthetic_spec(options.kind, options.dim, 1, options.train_count,
                                     derive_seed(options.seed, "oracle-train"));
  spec.classes[0].mean.assign(static_cast<std::size_t>(options.dim), 0.0);
  spec.classes[0].scale.assign(static_cast<std::size_t>(options.dim), 1.0);
  const auto train = sample_synthetic(spec);
  spec.per_class = options.eval_count;
  spec.seed = derive_seed(options.seed, "oracle-held-out");
  ShapeOracleResult r;
  r.held_out = sample_synthetic(spec).features;

  const auto st = compute_stats(0, train.features);
  StatsTable table{{0, st}};
  auto cfg = options.diffusion;
  cfg.seed = derive_seed(options.seed, "oracle-generator");
  const auto unet = unet_config_for(options.dim, 1, false, options.unet_widths);
  const auto gen = train_generator(normalize_by_class(train, table), make_schedule(cfg.steps), unet, cfg, 0);
  r.generated_samples = denormalize_by_class(
      sample_features(gen, 0, options.eval_count, cfg.sampling_steps, cfg.guidance_scale,
                      derive_seed(options.seed, "oracle-sample")),
      st);
  r.gaussian_samples = gaussian_prototype_baseline(st, options.eval_count, derive_seed(options.seed, "oracle-gauss"));
  r.generated = mmd(r.generated_samples, r.held_out);
  r.gaussian = mmd(r.gaussian_samples, r.held_out);
  return r;
}

}  // namespace featdiff
