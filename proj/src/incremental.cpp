#include "featdiff/incremental.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <algorithm>
#include <climits>
#include <cmath>
#include <fstream>
#include <set>

#include "featdiff/binary_io.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/lr_schedule.hpp"

namespace featdiff {

void ClassifierConfig::validate() const {
  if (epochs < 1) throw ConfigError("classifier epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("classifier batch size must be at least 1");
  if (lr <= 0.0) throw ConfigError("classifier learning rate must be positive");
}

std::int64_t ClassifierState::row_of(int class_id) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == class_id) return static_cast<std::int64_t>(i);
  }
  return -1;
}

ClassifierState make_classifier(std::int64_t feature_dim) {
  if (feature_dim <= 0) throw ArgumentError("classifier feature dimension must be positive");
  ClassifierState s;
  s.weight = torch::zeros({0, feature_dim});
  s.bias = torch::zeros({0});
  return s;
}

ClassifierState extend_classifier(const ClassifierState& state, const std::vector<int>& new_ids, std::uint64_t seed) {
  std::set<int> seen(state.classes.begin(), state.classes.end());
  for (int id : new_ids) {
    if (!seen.insert(id).second) throw ArgumentError("class " + std::to_string(id) + " is already registered");
  }
  ClassifierState out;
  out.phase = state.phase;
  out.classes = state.classes;
  out.classes.insert(out.classes.end(), new_ids.begin(), new_ids.end());
  if (new_ids.empty()) {
    out.weight = state.weight.clone();
    out.bias = state.bias.clone();
    return out;
  }
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto n = static_cast<std::int64_t>(new_ids.size());
  auto rows = torch::randn({n, state.dim()}, gen, torch::kFloat32) * kNewRowInitStd;
  out.weight = torch::cat({state.weight.detach(), rows});
  out.bias = torch::cat({state.bias.detach(), torch::zeros({n})});
  return out;
}

void ReplayPlan::validate(const std::vector<int>& old_classes) const {
  for (int c : old_classes) {
    const auto hits = std::count_if(entries.begin(), entries.end(), [c](const ReplayEntry& e) { return e.class_id == c; });
    if (hits == 0) throw ConfigError("replay plan is missing old class " + std::to_string(c));
    if (hits > 1) throw ConfigError("replay plan lists old class " + std::to_string(c) + " more than once");
  }
}

std::int64_t ReplayPlan::total() const {
  std::int64_t n = 0;
  for (const auto& e : entries) n += e.count;
  return n;
}

namespace {

torch::Tensor rows_for(const ClassifierState& state, const torch::Tensor& labels) {
  auto lab = labels.contiguous();
  std::vector<std::int64_t> rows(static_cast<std::size_t>(lab.numel()));
  const auto* p = lab.data_ptr<std::int64_t>();
  for (std::size_t i = 0; i < rows.size(); ++i) {
    rows[i] = state.row_of(static_cast<int>(p[i]));
    if (rows[i] < 0) throw ConfigError("class " + std::to_string(p[i]) + " is not registered in the classifier");
  }
  return torch::tensor(rows, torch::kInt64);
}

/// SGD over (features, target rows); `columns` restricts the softmax when set.
ClassifierState fit(ClassifierState state, const torch::Tensor& x, const torch::Tensor& target_rows,
                    const std::optional<torch::Tensor>& columns, const ClassifierConfig& config) {
  auto w = state.weight.detach().clone().set_requires_grad(true);
  auto b = state.bias.detach().clone().set_requires_grad(true);
  torch::optim::SGD opt({w, b}, torch::optim::SGDOptions(config.lr)
                                    .momentum(config.momentum)
                                    .weight_decay(config.weight_decay));
  const CosineAnnealingLr schedule(config.lr, config.epochs);
  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed);

  torch::Tensor targets = target_rows;
  if (columns) {
    // Map registry rows to positions inside the restricted logit vector.
    std::vector<std::int64_t> lut(static_cast<std::size_t>(state.num_classes()), -1);
    auto cols = columns->contiguous();
    for (std::int64_t i = 0; i < cols.numel(); ++i) lut[static_cast<std::size_t>(cols[i].item<std::int64_t>())] = i;
    targets = torch::tensor(lut, torch::kInt64).index_select(0, target_rows);
  }

  const auto n = x.size(0);
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    schedule.apply<torch::optim::SGD, torch::optim::SGDOptions>(opt, epoch);
    auto perm = torch::randperm(n, gen, torch::kInt64);
    for (std::int64_t s = 0; s < n; s += config.batch_size) {
      auto idx = perm.slice(0, s, std::min(n, s + config.batch_size));
      auto xb = x.index_select(0, idx);
      auto yb = targets.index_select(0, idx);
      auto logits = columns ? torch::addmm(b.index_select(0, *columns), xb, w.index_select(0, *columns).t())
                            : torch::addmm(b, xb, w.t());
      auto loss = torch::nn::functional::cross_entropy(logits, yb);
      if (!std::isfinite(loss.item<double>())) {
        throw DivergenceError("classifier loss became non-finite at epoch " + std::to_string(epoch + 1));
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
    }
  }
  state.weight = w.detach();
  state.bias = b.detach();
  return state;
}

}  // namespace

ClassifierState train_phase(ClassifierState state, const FeatureSet& real, const FeatureSet& replay,
                            const ClassifierConfig& config) {
  config.validate();
  const auto real_classes = real.classes();
  const auto replay_classes = replay.classes();
  for (int c : state.classes) {
    const bool is_new = std::binary_search(real_classes.begin(), real_classes.end(), c);
    const bool replayed = std::binary_search(replay_classes.begin(), replay_classes.end(), c);
    if (!is_new && !replayed) throw ConfigError("no replay features for old class " + std::to_string(c));
  }
  auto all = concat({real, replay});
  if (all.size() == 0) throw ConfigError("phase has no training features");
  if (all.dim() != state.dim()) throw ArgumentError("feature dimension does not match classifier");
  auto rows = rows_for(state, all.labels);
  return fit(std::move(state), all.features.to(torch::kFloat32), rows, std::nullopt, config);
}

ClassifierState train_phase_masked_baseline(ClassifierState state, const FeatureSet& real,
                                            const ClassifierConfig& config) {
  config.validate();
  if (real.size() == 0) throw ConfigError("phase has no training features");
  if (real.dim() != state.dim()) throw ArgumentError("feature dimension does not match classifier");
  std::vector<std::int64_t> cols;
  for (int c : real.classes()) cols.push_back(state.row_of(c));
  std::sort(cols.begin(), cols.end());
  auto rows = rows_for(state, real.labels);
  return fit(std::move(state), real.features.to(torch::kFloat32), rows, torch::tensor(cols, torch::kInt64), config);
}

Prediction predict(const ClassifierState& state, const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(1) != state.dim()) {
    throw ArgumentError("expected [N, " + std::to_string(state.dim()) + "] features");
  }
  if (state.classes.empty()) throw ArgumentError("classifier has no classes");
  torch::NoGradGuard no_grad;
  Prediction p;
  p.logits = torch::addmm(state.bias, features.to(torch::kFloat32), state.weight.t());
  auto best = std::get<0>(p.logits.max(1, /*keepdim=*/true));
  auto ids = torch::tensor(std::vector<std::int64_t>(state.classes.begin(), state.classes.end()), torch::kInt64)
                 .unsqueeze(0)
                 .expand_as(p.logits);
  auto candidates = torch::where(p.logits == best, ids, torch::full_like(ids, LLONG_MAX));
  p.classes = std::get<0>(candidates.min(1));
  return p;
}

PhaseEvaluation evaluate_phase(const ClassifierState& state, const FeatureSet& test,
                               const std::vector<std::vector<int>>& task_classes) {
  PhaseEvaluation ev;
  if (test.size() == 0) throw ArgumentError("empty evaluation set");
  auto pred = predict(state, test.features).classes;
  auto correct = pred == test.labels;
  ev.overall = 100.0 * correct.to(torch::kFloat64).mean().item<double>();
  for (const auto& classes : task_classes) {
    auto mask = torch::zeros_like(correct);
    for (int c : classes) mask = mask | (test.labels == c);
    const auto n = mask.sum().item<std::int64_t>();
    ev.task_counts.push_back(n);
    ev.per_task.push_back(n == 0 ? 0.0 : 100.0 * (correct & mask).sum().item<double>() / static_cast<double>(n));
  }
  return ev;
}

namespace {
constexpr io::Magic kClassifierMagic{'F', 'D', 'C', 'L'};
}

void ClassifierState::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write classifier " + path.string());
  io::write_magic(os, kClassifierMagic);
  io::write_le<std::int32_t>(os, phase);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dim()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(classes.size()));
  io::write_ints(os, std::vector<std::int32_t>(classes.begin(), classes.end()));
  auto w = weight.contiguous();
  auto b = bias.contiguous();
  io::write_floats(os, {w.data_ptr<float>(), static_cast<std::size_t>(w.numel())});
  io::write_floats(os, {b.data_ptr<float>(), static_cast<std::size_t>(b.numel())});
}

ClassifierState ClassifierState::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open classifier " + path.string());
  io::expect_magic(is, kClassifierMagic, "classifier");
  ClassifierState s;
  s.phase = io::read_le<std::int32_t>(is);
  const auto d = static_cast<std::int64_t>(io::read_le<std::uint32_t>(is));
  const auto n = io::read_le<std::uint32_t>(is);
  const auto ids = io::read_ints(is, n);
  s.classes.assign(ids.begin(), ids.end());
  s.weight = torch::tensor(io::read_floats(is, n * static_cast<std::size_t>(d)), torch::kFloat32).view({n, d});
  s.bias = torch::tensor(io::read_floats(is, n), torch::kFloat32);
  return s;
}

}  // namespace featdiff
