// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any
// gating criterion fails.
//
//   acceptance <source_dir> <work_dir> [criterion ids...]
//
// With no ids every criterion runs. The desk benchmark settings come from
// configs/shapes10_desk.txt and configs/banana_oracle.txt in the source tree.

#include <ATen/CPUGeneratorImpl.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "featdiff/calibration.hpp"
#include "featdiff/config.hpp"
#include "featdiff/feature_diffusion.hpp"
#include "featdiff/harness.hpp"
#include "featdiff/metrics.hpp"
#include "featdiff/noise_schedule.hpp"
#include "featdiff/random.hpp"
#include "featdiff/unet1d.hpp"

namespace fs = std::filesystem;
using namespace featdiff;

namespace {

struct Outcome {
  bool pass = false;
  bool gating = true;
  std::string detail;
};

int failures = 0;
FILE* report_file = nullptr;  // <work_dir>/acceptance_report.txt, same lines as stdout

void report(int id, const std::string& title, const Outcome& o, double seconds) {
  const char* verdict = o.pass ? "PASS" : (o.gating ? "FAIL" : "INFO");
  for (FILE* f : {stdout, report_file}) {
    if (!f) continue;
    std::fprintf(f, "criterion %2d  %-4s  %s: %s  [%.0fs]\n", id, verdict, title.c_str(), o.detail.c_str(), seconds);
    std::fflush(f);
  }
  if (!o.pass && o.gating) ++failures;
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. normalize/denormalize round trip with floored stats.
Outcome calibration_round_trip() {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(101);
  const std::int64_t n = 10000, d = 64;
  auto f = (torch::randn({n, d}, gen) * 3.0 + 1.0).to(torch::kFloat32);
  ClassStats st;
  st.class_id = 0;
  st.count = n;
  st.mean = torch::randn({d}, gen, torch::kFloat64) * 2.0;
  st.std = torch::rand({d}, gen, torch::kFloat64) * 4.0;
  st.std.slice(0, 0, 8).fill_(kStdFloor);  // floored dimensions
  st.std = st.std.clamp_min(kStdFloor);
  auto back = denormalize_by_class(normalize_by_class(f, st), st);
  const double err = (back.to(torch::kFloat64) - f.to(torch::kFloat64)).abs().max().item<double>();
  return {err < 1e-5, true, fmt("max abs error %.3g (limit 1e-5)", err)};
}

// 2. Monte Carlo marginals of the forward process against the closed form.
Outcome forward_marginals() {
  const int k_total = 20;
  const auto sched = make_schedule(k_total);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(202);
  const std::int64_t draws = 10000, d = 32;
  auto f0 = torch::linspace(-2.0, 2.0, d, torch::kFloat64).to(torch::kFloat32);
  bool ok = true;
  std::string detail;
  for (int k : {1, k_total / 2, k_total}) {
    auto base = f0.unsqueeze(0).expand({draws, d}).contiguous();
    auto noise = torch::randn({draws, d}, gen);
    auto fk = forward_diffuse(base, k, sched, noise).to(torch::kFloat64);
    const double ab = sched.alpha_bar_at(k);
    auto mu = std::sqrt(ab) * f0.to(torch::kFloat64);
    const double var = 1.0 - ab;
    // Mean error relative to the marginal's RMS scale (RMS over the
    // independent dimensions), variance relative.
    auto scale = (mu * mu + var).sqrt();
    const double mean_err = ((fk.mean(0) - mu) / scale).pow(2).mean().sqrt().item<double>();
    const double var_err = std::abs(fk.var(0, /*unbiased=*/true).mean().item<double>() / var - 1.0);
    ok = ok && mean_err < 0.02 && var_err < 0.02;
    detail += fmt("k=%d mean %.2f%% var %.2f%%; ", k, 100 * mean_err, 100 * var_err);
  }
  return {ok, true, detail + "limit 2%"};
}

// 3. Guidance degeneracies.
Outcome guidance_degeneracies() {
  auto gen = at::make_generator<at::CPUGeneratorImpl>(303);
  auto uncond = torch::randn({16, 1, 64}, gen);
  auto cond = torch::randn({16, 1, 64}, gen);
  const bool s1 = torch::equal(cfg_combine(uncond, cond, 1.0), cond);
  const bool s0 = torch::equal(cfg_combine(uncond, cond, 0.0), uncond);
  return {s1 && s0, true, fmt("s=1 equals conditional: %s, s=0 equals unconditional: %s", s1 ? "yes" : "no",
                              s0 ? "yes" : "no")};
}

// 4. Parameter budget of the d=512, 100-class generator.
Outcome unet_budget() {
  UNet1D net(unet_config_for(512, 100, false));
  UNet1D doubled(unet_config_for(512, 50, true));
  const auto n = count_parameters(*net);
  const auto n2 = count_parameters(*doubled);
  return {n <= 10'000'000, true,
          fmt("%lld parameters (limit 10M); doubled 50-class phase-0 variant %lld", static_cast<long long>(n),
              static_cast<long long>(n2))};
}

// 5. Banana oracle: generator vs Gaussian prototype, three seeds.
Outcome shape_oracle(const fs::path& source) {
  const auto cfg = ExperimentConfig::load(source / "configs" / "banana_oracle.txt");
  bool ok = true;
  std::string detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    ShapeOracleOptions o;
    o.kind = SyntheticKind::Banana;
    o.dim = 2;
    o.train_count = 50000;
    o.eval_count = 2000;
    o.diffusion = cfg.diffusion;
    o.unet_widths = cfg.unet_widths;
    o.seed = seed;
    const auto r = run_shape_oracle(o);
    ok = ok && r.generated.estimate < r.gaussian.estimate;
    detail += fmt("seed %llu: %.4f vs %.4f; ", static_cast<unsigned long long>(seed), r.generated.estimate,
                  r.gaussian.estimate);
  }
  return {ok, true, "MMD generated vs gaussian, " + detail};
}

// 6. Metric formulas on a fixed 4-phase matrix.
Outcome metric_formulas() {
  AccuracyMatrix m(4);
  const double rows[4][4] = {{80, 0, 0, 0}, {70, 90, 0, 0}, {75, 85, 88, 0}, {82, 80, 86, 91}};
  const double overall[4] = {80, 78, 81, 84};
  for (int t = 0; t < 4; ++t) {
    m.set_overall(t, overall[t]);
    for (int j = 0; j <= t; ++j) m.set(t, j, rows[t][j]);
  }
  // By hand: F_1 = 80-70; F_2 = ((80-75) + (90-85))/2; F_3 = ((80-82) + (90-80) + (88-86))/3.
  const double f1 = 10.0, f2 = (5.0 + 5.0) / 2.0, f3 = (-2.0 + 10.0 + 2.0) / 3.0;
  const double expected_f = (f1 + f2 + f3) / 3.0;
  const double expected_a = (80.0 + 78.0 + 81.0 + 84.0) / 4.0;
  const double a = average_incremental_accuracy({overall, overall + 4});
  const double f = average_forgetting(m);
  const double neg = forgetting_of_task(m, 3, 0);
  const bool ok = a == expected_a && f == expected_f && neg == -2.0;
  return {ok, true, fmt("A=%.17g (want %.17g), F=%.17g (want %.17g), f_0^3=%g", a, expected_a, f, expected_f, neg)};
}

// 7, 8, 10 share one benchmark: per seed one extractor, one set of stats and
// generators, and several classifier protocols on top.
struct BenchmarkResult {
  std::map<std::string, std::vector<double>> a_t;  // variant -> A_T per seed
  double mean(const std::string& v) const {
    const auto& xs = a_t.at(v);
    double s = 0.0;
    for (double x : xs) s += x;
    return s / static_cast<double>(xs.size());
  }
};

BenchmarkResult run_benchmark(const fs::path& source, const fs::path& work) {
  BenchmarkResult out;
  auto base = ExperimentConfig::load(source / "configs" / "shapes10_desk.txt");
  for (std::uint64_t seed : {1, 2, 3}) {
    auto cfg = base;
    cfg.order_seed = seed;
    cfg.shapes_seed = derive_seed(seed, "shapes");
    cfg.extractor.seed = derive_seed(seed, "extractor");
    cfg.diffusion.seed = derive_seed(seed, "diffusion");
    cfg.classifier.seed = derive_seed(seed, "classifier");
    cfg.output_dir = (work / ("seed_" + std::to_string(seed))).string();
    Experiment exp(cfg, /*resume=*/true);

    auto opts = ProtocolOptions::from_config(cfg);
    opts.sampling_steps = cfg.diffusion.steps;
    opts.guidance_scale = 1.0;
    std::vector<std::pair<std::string, ProtocolOptions>> variants;
    variants.emplace_back("diffusion", opts);
    auto steps10 = opts;
    steps10.sampling_steps = cfg.diffusion.steps / 2;
    variants.emplace_back("diffusion_10_steps", steps10);
    auto scale5 = opts;
    scale5.guidance_scale = 5.0;
    variants.emplace_back("diffusion_scale_5", scale5);
    auto gauss = opts;
    gauss.source = ReplaySource::Gaussian;
    variants.emplace_back("gaussian", gauss);
    auto masked = opts;
    masked.masked_baseline = true;
    variants.emplace_back("masked", masked);
    auto real = opts;
    real.source = ReplaySource::Real;
    variants.emplace_back("real", real);

    std::string line = fmt("  seed %llu:", static_cast<unsigned long long>(seed));
    for (const auto& [name, o] : variants) {
      const auto r = exp.run_protocol(o, /*persist=*/false);
      out.a_t[name].push_back(r.average_accuracy);
      line += fmt(" %s %.2f (final %.2f)", name.c_str(), r.average_accuracy, r.phase_accuracy.back());
    }
    for (FILE* f : {stdout, report_file}) {
      if (!f) continue;
      std::fprintf(f, "%s\n", line.c_str());
      std::fflush(f);
    }
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  if (argc < 3) {
    std::fprintf(stderr, "usage: acceptance <source_dir> <work_dir> [criteria...]\n");
    return 2;
  }
  const fs::path source = argv[1];
  const fs::path work = argv[2];
  std::set<int> wanted;
  for (int i = 3; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto want = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };
  torch::set_num_threads(1);
  fs::create_directories(work);
  report_file = std::fopen((work / "acceptance_report.txt").c_str(), "w");

  auto timed = [](int id, const std::string& title, const std::function<Outcome()>& body) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = body();
    } catch (const std::exception& e) {
      o = {false, true, std::string("error: ") + e.what()};
    }
    report(id, title, o, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  };

  if (want(1)) timed(1, "calibration round trip", calibration_round_trip);
  if (want(2)) timed(2, "forward diffusion marginals", forward_marginals);
  if (want(3)) timed(3, "guidance degeneracies", guidance_degeneracies);
  if (want(4)) timed(4, "generator parameter budget", unet_budget);
  if (want(5)) timed(5, "banana distribution oracle", [&] { return shape_oracle(source); });
  if (want(6)) timed(6, "metric formulas", metric_formulas);

  if (want(7) || want(8) || want(10)) {
    const auto t0 = std::chrono::steady_clock::now();
    std::optional<BenchmarkResult> bench;
    std::string error;
    try {
      fs::remove_all(work / "benchmark");
      bench = run_benchmark(source, work / "benchmark");
    } catch (const std::exception& e) {
      error = e.what();
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    auto failed = [&] { return Outcome{false, true, "benchmark error: " + error}; };
    if (want(7)) {
      Outcome o = failed();
      if (bench) {
        const double d = bench->mean("diffusion"), m = bench->mean("masked"), g = bench->mean("gaussian");
        o = {d - m >= 10.0 && d - g >= 2.0, true,
             fmt("A_T diffusion %.2f, masked %.2f (+%.2f, need 10), gaussian %.2f (+%.2f, need 2), real %.2f", d,
                 m, d - m, g, d - g, bench->mean("real"))};
      }
      report(7, "small-scale ordering", o, secs);
    }
    if (want(8)) {
      Outcome o = failed();
      if (bench) {
        const double a20 = bench->mean("diffusion"), a10 = bench->mean("diffusion_10_steps");
        o = {std::abs(a20 - a10) < 1.0, true, fmt("A_T 20 steps %.2f, 10 steps %.2f (|diff| %.2f < 1)", a20, a10,
                                                  std::abs(a20 - a10))};
      }
      report(8, "sampling-step robustness", o, 0.0);
    }
    if (want(10)) {
      Outcome o = failed();
      if (bench) {
        const double s1 = bench->mean("diffusion"), s5 = bench->mean("diffusion_scale_5");
        o = {s1 >= s5, true, fmt("A_T scale 1 %.2f >= scale 5 %.2f", s1, s5)};
      }
      report(10, "guidance-scale trend", o, 0.0);
    }
  }

  if (want(9)) {
    // Extended GPU run: only the shipped config is checked here.
    timed(9, "full CIFAR-100 T=10 numbers (extended, not gating)", [&] {
      const auto cfg = ExperimentConfig::load(source / "configs" / "cifar100_T10.txt");
      cfg.validate();
      Outcome o;
      o.gating = false;
      o.pass = false;
      o.detail = fmt("not run at desk scale; shipped config validated (T=%d, %d initial classes, %lld generator "
                     "iterations); target A_T 71.9 +/- 1.5 needs the extended run",
                     cfg.phases, cfg.initial_classes, static_cast<long long>(cfg.diffusion.iterations));
      return o;
    });
  }

  const std::string verdict = failures == 0 ? "acceptance: all gating criteria passed"
                                             : fmt("acceptance: %d gating criteria failed", failures);
  for (FILE* f : {stdout, report_file})
    if (f) std::fprintf(f, "%s\n", verdict.c_str());
  if (report_file) std::fclose(report_file);
  return failures == 0 ? 0 : 1;
}
