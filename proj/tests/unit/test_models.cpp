#include <doctest.h>

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <filesystem>

#include "featdiff/backbone.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/feature_diffusion.hpp"
#include "featdiff/incremental.hpp"
#include "featdiff/ssl_pretrain.hpp"
#include "featdiff/unet1d.hpp"

using namespace featdiff;
namespace fs = std::filesystem;

TEST_CASE("four quarter turns are the identity") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(1);
  auto img = torch::randint(0, 255, {2, 3, 8, 8}, gen).to(torch::kUInt8);
  auto x = img;
  for (int i = 0; i < 4; ++i) x = rotate_images(x, 1);
  CHECK(torch::equal(x, img));
  CHECK(torch::equal(rotate_images(rotate_images(img, 1), 3), img));
  CHECK(torch::equal(rotate_images(rotate_images(img, 2), 2), img));
  CHECK_FALSE(torch::equal(rotate_images(img, 1), img));
  CHECK_THROWS_AS(rotate_images(img, 4), ArgumentError);
}

TEST_CASE("extended labels") {
  auto img = torch::zeros({3, 4, 4});
  for (std::int64_t y : {0, 3, 49})
    for (int j = 0; j < 4; ++j) {
      const auto [_, e] = rotate_augment(img, y, j);
      CHECK(e == 4 * y + j);
      CHECK(split_extended_label(e) == std::pair<std::int64_t, int>{y, j});
    }
  CHECK_THROWS_AS(rotate_augment(torch::zeros({3, 4, 5}), 0, 1), ArgumentError);
}

TEST_CASE("cross-entropy of uniform logits is log K") {
  for (int k : {4, 200}) {
    auto logits = torch::zeros({5, k});
    auto labels = torch::tensor({0, 1, 2, 3, 0}, torch::kLong);
    CHECK(ce_loss(logits, labels).item<double>() == doctest::Approx(std::log(k)));
  }
  CHECK_THROWS_AS(ce_loss(torch::zeros({1, 4}), torch::tensor({4}, torch::kLong)), ArgumentError);
}

TEST_CASE("siamese loss on aligned, orthogonal and opposite vectors") {
  auto a = torch::tensor({1.f, 0.f}).unsqueeze(0);
  CHECK(ssl_loss(a, a * 3).item<double>() == doctest::Approx(0.0));
  CHECK(ssl_loss(a, torch::tensor({0.f, 2.f}).unsqueeze(0)).item<double>() == doctest::Approx(1.0));
  CHECK(ssl_loss(a, -a).item<double>() == doctest::Approx(2.0));
  CHECK_THROWS_AS(ssl_loss(a, torch::zeros({1, 2})), NumericError);
  CHECK(combined_loss(1.0, 0.2, 5.0) == doctest::Approx(2.0));
  CHECK(combined_loss(torch::tensor(1.0), torch::tensor(0.2), 5.0).item<double>() == doctest::Approx(2.0));
}

TEST_CASE("no gradient reaches the reference branch") {
  auto z = torch::randn({4, 8}).requires_grad_();
  auto ref = torch::randn({4, 8}).requires_grad_();
  ssl_loss(z, ref).backward();
  CHECK(z.grad().defined());
  CHECK(z.grad().abs().sum().item<double>() > 0);
  CHECK_FALSE(ref.grad().defined());
}

TEST_CASE("backbones produce the declared feature width") {
  auto x = torch::randn({2, 3, 32, 32});
  auto small = make_backbone("small_cnn", 64);
  CHECK(small->forward(x).sizes() == torch::IntArrayRef{2, 64});
  auto res = make_backbone("resnet18", 512);
  CHECK(res->forward(x).sizes() == torch::IntArrayRef{2, 512});
  CHECK_THROWS_AS(make_backbone("resnet18", 128), ConfigError);
  CHECK_THROWS_AS(make_backbone("vgg", 64), ConfigError);
}

TEST_CASE("frozen extractor save and load give identical features") {
  FrozenExtractor ex(make_backbone("small_cnn", 16), 42);
  auto x = torch::randn({3, 3, 32, 32});
  auto f = ex.extract(x);
  const auto path = fs::temp_directory_path() / "featdiff_extractor_test.bin";
  ex.save(path);
  const auto back = FrozenExtractor::load(path);
  CHECK(back.seed() == 42);
  CHECK(back.backbone_id() == "small_cnn");
  CHECK(torch::equal(back.extract(x), f));
  fs::remove(path);
}

TEST_CASE("u-net keeps the padded shape") {
  auto cfg = unet_config_for(100, 5, false, {16, 16, 32, 32, 64});
  CHECK(cfg.padded_length() == 128);
  CHECK(cfg.downsample_factor() == 64);
  UNet1D net(cfg);
  auto x = torch::randn({3, 1, cfg.padded_length()});
  auto out = net->forward(x, torch::tensor({1, 10, 20}, torch::kLong), torch::tensor({0, 4, 5}, torch::kLong));
  CHECK(out.sizes() == x.sizes());
  const auto doubled = cfg.doubled();
  CHECK(doubled.widths == std::vector<std::int64_t>{32, 32, 64, 64, 128});
  CHECK(count_parameters(*UNet1D(doubled)) > count_parameters(*net));
}

TEST_CASE("padding round trip") {
  auto f = torch::randn({4, 10});
  auto p = pad_features(f, 64);
  CHECK(p.sizes() == torch::IntArrayRef{4, 1, 64});
  CHECK(p.slice(2, 10).abs().sum().item<double>() == 0.0);
  CHECK(torch::equal(unpad_features(p, 10), f));
}

TEST_CASE("guidance combination") {
  auto u = torch::full({2, 3}, 1.0f), c = torch::full({2, 3}, 3.0f);
  CHECK(torch::equal(cfg_combine(u, c, 1.0), c));
  CHECK(torch::equal(cfg_combine(u, c, 0.0), u));
  CHECK(torch::allclose(cfg_combine(u, c, 2.0), torch::full({2, 3}, 5.0f)));
  CHECK_THROWS_AS(cfg_combine(u, torch::zeros({3, 2}), 1.0), ArgumentError);
}

TEST_CASE("a small generator learns class-separated features") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(3);
  const std::int64_t d = 8, n = 400;
  FeatureSet set;
  set.features = torch::cat({torch::randn({n, d}, gen) * 0.3 + 1.5, torch::randn({n, d}, gen) * 0.3 - 1.5});
  set.labels = torch::cat({torch::full({n}, 4, torch::kLong), torch::full({n}, 9, torch::kLong)});
  DiffusionConfig dc;
  dc.iterations = 400;
  dc.lr = 2e-3;
  dc.seed = 5;
  const auto schedule = make_schedule(dc.steps);
  auto g = train_generator(set, schedule, unet_config_for(d, 2, false, {16, 16, 32, 32, 64}), dc, 0);
  CHECK(g.classes == std::vector<int>{4, 9});
  CHECK(g.null_condition() == 2);
  CHECK_THROWS_AS(g.condition_index(5), ArgumentError);

  auto a = sample_features(g, 4, 200, 20, 1.0, 1);
  auto b = sample_features(g, 9, 200, 20, 1.0, 1);
  CHECK(a.sizes() == torch::IntArrayRef{200, d});
  CHECK(a.mean().item<double>() > 0.8);
  CHECK(b.mean().item<double>() < -0.8);
  // deterministic skipping schedule with fewer steps stays on the right side
  CHECK(sample_features(g, 4, 100, 10, 1.0, 2).mean().item<double>() > 0.8);
  CHECK(torch::equal(sample_features(g, 9, 50, 20, 1.0, 7), sample_features(g, 9, 50, 20, 1.0, 7)));
  CHECK_THROWS_AS(sample_features(g, 4, 10, 21, 1.0, 1), ArgumentError);

  const auto path = fs::temp_directory_path() / "featdiff_generator_test.bin";
  g.save(path);
  const auto back = GeneratorCheckpoint::load(path);
  CHECK(back.classes == g.classes);
  CHECK(torch::equal(sample_features(back, 9, 50, 20, 2.0, 7), sample_features(g, 9, 50, 20, 2.0, 7)));
  fs::remove(path);
}

TEST_CASE("head extension keeps old rows and draws small new ones") {
  auto s = make_classifier(64);
  std::vector<int> first(100);
  for (int i = 0; i < 100; ++i) first[i] = i;
  s = extend_classifier(s, first, 1);
  CHECK(s.num_classes() == 100);
  const double sd = s.weight.std().item<double>();
  CHECK(sd == doctest::Approx(kNewRowInitStd).epsilon(0.05));
  CHECK(s.bias.abs().sum().item<double>() == 0.0);
  auto ext = extend_classifier(s, {200, 150}, 2);
  CHECK(ext.num_classes() == 102);
  CHECK(torch::equal(ext.weight.slice(0, 0, 100), s.weight));
  CHECK(ext.row_of(150) == 101);
  CHECK(ext.row_of(7) == 7);
  CHECK(ext.row_of(151) == -1);
  CHECK_THROWS_AS(extend_classifier(ext, {3}, 3), ArgumentError);
  CHECK_THROWS_AS(extend_classifier(ext, {300, 300}, 3), ArgumentError);
}

TEST_CASE("argmax ties go to the lowest class id") {
  auto s = extend_classifier(make_classifier(4), {7, 3, 5}, 1);
  s.weight.zero_();
  auto p = predict(s, torch::randn({6, 4}));
  CHECK((p.classes == 3).all().item<bool>());
  s.bias[2] = 1.0f;  // class 5
  CHECK((predict(s, torch::randn({2, 4})).classes == 5).all().item<bool>());
}

namespace {

FeatureSet blob(int label, float center, std::int64_t n, std::uint64_t seed) {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  FeatureSet s;
  s.features = torch::randn({n, 6}, gen) * 0.5 + center;
  s.labels = torch::full({n}, label, torch::kLong);
  return s;
}

}  // namespace

TEST_CASE("two separable classes over two phases") {
  ClassifierConfig cc;
  cc.epochs = 10;
  auto s = extend_classifier(make_classifier(6), {0}, 1);
  s = extend_classifier(s, {1}, 2);
  const auto old_real = blob(0, 3.0f, 200, 1);
  const auto new_real = blob(1, -3.0f, 200, 2);
  s = train_phase(s, new_real, old_real, cc);
  const auto test = concat({blob(0, 3.0f, 100, 3), blob(1, -3.0f, 100, 4)});
  const auto ev = evaluate_phase(s, test, {{0}, {1}});
  CHECK(ev.overall == doctest::Approx(100.0));
  CHECK(ev.per_task == std::vector<double>{100.0, 100.0});
  CHECK(ev.task_counts == std::vector<std::int64_t>{100, 100});
}

TEST_CASE("missing replay for an old class is a config error") {
  auto s = extend_classifier(make_classifier(6), {0, 1}, 1);
  CHECK_THROWS_AS(train_phase(s, blob(1, 0.f, 10, 1), FeatureSet{}, ClassifierConfig{}), ConfigError);
}

TEST_CASE("masked baseline leaves other rows untouched") {
  auto s = extend_classifier(make_classifier(6), {0, 1, 2}, 1);
  s.bias.fill_(0.5);
  const auto before = s.weight.clone();
  ClassifierConfig cc;
  cc.epochs = 3;
  auto after = train_phase_masked_baseline(s, concat({blob(1, 2.f, 50, 1), blob(2, -2.f, 50, 2)}), cc);
  CHECK(torch::equal(after.weight[0], before[0]));
  CHECK(after.bias[0].item<float>() == 0.5f);
  CHECK_FALSE(torch::equal(after.weight[1], before[1]));
  // with one class present the masked softmax has nothing to learn
  auto single = train_phase_masked_baseline(s, blob(2, 1.f, 40, 3), cc);
  CHECK(torch::allclose(single.weight, s.weight));
}

TEST_CASE("classifier checkpoint round trip") {
  auto s = extend_classifier(make_classifier(5), {4, 2, 8}, 3);
  s.phase = 2;
  const auto path = fs::temp_directory_path() / "featdiff_classifier_test.bin";
  s.save(path);
  const auto back = ClassifierState::load(path);
  CHECK(back.phase == 2);
  CHECK(back.classes == s.classes);
  CHECK(torch::equal(back.weight, s.weight));
  CHECK(torch::equal(back.bias, s.bias));
  fs::remove(path);
}
