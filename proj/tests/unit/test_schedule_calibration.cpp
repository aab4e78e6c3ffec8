#include <doctest.h>

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <filesystem>

#include "featdiff/calibration.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/lr_schedule.hpp"
#include "featdiff/noise_schedule.hpp"

using namespace featdiff;
namespace fs = std::filesystem;

TEST_CASE("two-step schedule from constant betas") {
  const auto s = NoiseSchedule::from_betas({0.1, 0.1});
  REQUIRE(s.steps == 2);
  CHECK(s.alpha_bar[0] == doctest::Approx(0.9));
  CHECK(s.alpha_bar[1] == doctest::Approx(0.81));
  CHECK(s.alpha_bar_at(0) == 1.0);
  // beta_tilde_2 = beta_2 (1 - abar_1) / (1 - abar_2) = 0.1 * 0.1 / 0.19
  CHECK(s.sigma[1] * s.sigma[1] == doctest::Approx(0.01 / 0.19));
}

TEST_CASE("betas outside (0, 1) are rejected") {
  CHECK_THROWS_AS(NoiseSchedule::from_betas({}), ArgumentError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.1, 1.0}), ArgumentError);
  CHECK_THROWS_AS(NoiseSchedule::from_betas({0.0}), ArgumentError);
  CHECK_THROWS_AS(make_schedule(0), ArgumentError);
}

TEST_CASE("compressed schedule follows the 1000-step reference") {
  for (int k_total : {20, 50, 1000}) {
    const auto s = make_schedule(k_total);
    REQUIRE(s.steps == k_total);
    // independent product over the reference betas
    double ref = 1.0;
    int done = 0;
    for (int k = 1; k <= k_total; ++k) {
      const int until = k * 1000 / k_total;
      for (; done < until; ++done) ref *= 1.0 - (1e-4 + (2e-2 - 1e-4) * done / 999.0);
      CHECK(s.alpha_bar_at(k) == doctest::Approx(ref).epsilon(1e-9));
    }
    for (std::size_t i = 1; i < s.alpha_bar.size(); ++i) CHECK(s.alpha_bar[i] < s.alpha_bar[i - 1]);
  }
}

TEST_CASE("forward diffusion is the closed-form interpolation") {
  const auto s = make_schedule(20);
  auto f0 = torch::arange(6, torch::kFloat32).reshape({2, 3});
  auto eps = torch::ones({2, 3});
  auto fk = forward_diffuse(f0, 7, s, eps);
  const double a = s.alpha_bar_at(7);
  auto expect = f0 * std::sqrt(a) + std::sqrt(1.0 - a);
  CHECK(torch::allclose(fk, expect, 1e-6, 1e-6));
  CHECK_THROWS_AS(forward_diffuse(f0, 0, s, eps), ArgumentError);
  CHECK_THROWS_AS(forward_diffuse(f0, 21, s, eps), ArgumentError);
  auto bad = f0.clone();
  bad[0][0] = std::nan("");
  CHECK_THROWS_AS(forward_diffuse(bad, 3, s, eps), NumericError);

  // per-row steps agree with the scalar overload
  auto steps = torch::tensor({3, 15}, torch::kLong);
  auto rows = forward_diffuse(f0, steps, s, eps);
  CHECK(torch::allclose(rows[0], forward_diffuse(f0, 3, s, eps)[0]));
  CHECK(torch::allclose(rows[1], forward_diffuse(f0, 15, s, eps)[1]));
}

TEST_CASE("class stats of a two-point set") {
  auto f = torch::tensor({1.0f, 3.0f, 3.0f, 5.0f}).reshape({2, 2});
  const auto st = compute_stats(4, f);
  CHECK(st.class_id == 4);
  CHECK(st.count == 2);
  CHECK(st.mean[0].item<double>() == doctest::Approx(2.0));
  CHECK(st.mean[1].item<double>() == doctest::Approx(4.0));
  // population std
  CHECK(st.std[0].item<double>() == doctest::Approx(1.0));
  CHECK(st.std[1].item<double>() == doctest::Approx(1.0));
}

TEST_CASE("constant dimensions hit the std floor") {
  auto f = torch::tensor({1.0f, 2.0f, 1.0f, 4.0f, 1.0f, 6.0f}).reshape({3, 2});
  const auto st = compute_stats(0, f);
  CHECK(st.std[0].item<double>() == kStdFloor);
  CHECK(st.std[1].item<double>() > 1.0);
  auto back = denormalize_by_class(normalize_by_class(f, st), st);
  CHECK(torch::allclose(back.to(torch::kFloat32), f, 0, 1e-5));
}

TEST_CASE("a single sample is a degenerate class") {
  CHECK_THROWS_AS(compute_stats(3, torch::ones({1, 4})), DegenerateClassError);
}

TEST_CASE("row-wise normalization uses each label's stats and checks the table") {
  FeatureSet set;
  set.features = torch::tensor({0.f, 0.f, 2.f, 2.f, 10.f, 10.f, 14.f, 14.f}).reshape({4, 2});
  set.labels = torch::tensor({0, 0, 1, 1}, torch::kLong);
  const auto table = compute_stats(set);
  REQUIRE(table.size() == 2);
  auto n = normalize_by_class(set, table);
  auto expect = torch::tensor({-1.f, -1.f, 1.f, 1.f, -1.f, -1.f, 1.f, 1.f}).reshape({4, 2});
  CHECK(torch::allclose(n.features, expect, 1e-5, 1e-5));
  StatsTable only_zero{{0, table.at(0)}};
  CHECK_THROWS_AS(normalize_by_class(set, only_zero), ArgumentError);
}

TEST_CASE("stats file round trip") {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(5);
  FeatureSet set;
  set.features = torch::randn({30, 7}, gen);
  set.labels = torch::arange(30, torch::kLong) % 3;
  const auto table = compute_stats(set);
  const auto path = fs::temp_directory_path() / "featdiff_stats_test.bin";
  save_stats(path, table);
  const auto back = load_stats(path);
  REQUIRE(back.size() == 3);
  for (const auto& [c, st] : table) {
    CHECK(back.at(c).count == st.count);
    CHECK(torch::allclose(back.at(c).mean, st.mean, 0, 1e-6));
    CHECK(torch::allclose(back.at(c).std, st.std, 0, 1e-6));
  }
  fs::remove(path);
  CHECK_THROWS_AS(load_stats(path), IoError);
}

TEST_CASE("cosine annealing endpoints and midpoint") {
  CosineAnnealingLr lr(0.1, 10);
  CHECK(lr.at(0) == doctest::Approx(0.1));
  CHECK(lr.at(5) == doctest::Approx(0.05));
  CHECK(lr.at(10) == doctest::Approx(0.0));
  CHECK(lr.at(25) == doctest::Approx(0.0));
  for (long s = 1; s <= 10; ++s) CHECK(lr.at(s) <= lr.at(s - 1));
}
