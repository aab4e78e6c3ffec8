#include "featdiff/calibration.hpp"

#include <fstream>

#include "featdiff/binary_io.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/log.hpp"

namespace featdiff {

ClassStats compute_stats(int class_id, const torch::Tensor& features) {
  if (features.dim() != 2 || features.size(0) < 2) {
    throw DegenerateClassError(class_id, "class " + std::to_string(class_id) + " has " +
                                             std::to_string(features.dim() == 2 ? features.size(0) : 0) +
                                             " samples; statistics need at least 2");
  }
  auto x = features.to(torch::kFloat64);
  ClassStats s;
  s.class_id = class_id;
  s.count = x.size(0);
  s.mean = x.mean(0);
  auto sd = (x - s.mean).square().mean(0).sqrt();
  const auto floored = (sd < kStdFloor).sum().item<std::int64_t>();
  if (floored > 0) {
    log::warn("class ", class_id, ": ", floored, " dimension(s) with std below ", kStdFloor, " were floored");
  }
  s.std = sd.clamp_min(kStdFloor);
  return s;
}

StatsTable compute_stats(const FeatureSet& set) {
  StatsTable table;
  for (int c : set.classes()) table.emplace(c, compute_stats(c, set.of_class(c)));
  return table;
}

namespace {

void check_dim(const torch::Tensor& features, const ClassStats& stats) {
  if (features.size(-1) != stats.dim()) {
    throw ArgumentError("feature dimension " + std::to_string(features.size(-1)) + " does not match class " +
                        std::to_string(stats.class_id) + " stats (" + std::to_string(stats.dim()) + ")");
  }
}

const ClassStats& lookup(const StatsTable& table, int label) {
  auto it = table.find(label);
  if (it == table.end()) throw ArgumentError("no calibration stats for class " + std::to_string(label));
  return it->second;
}

FeatureSet apply_by_class(const FeatureSet& set, const StatsTable& table, bool forward) {
  FeatureSet out = set;
  out.features = torch::empty_like(set.features);
  for (int c : set.classes()) {
    const auto& st = lookup(table, c);
    auto mask = set.labels == c;
    auto rows = set.features.index({mask});
    out.features.index_put_({mask}, forward ? normalize_by_class(rows, st) : denormalize_by_class(rows, st));
  }
  return out;
}

}  // namespace

torch::Tensor normalize_by_class(const torch::Tensor& features, const ClassStats& stats) {
  check_dim(features, stats);
  return ((features.to(torch::kFloat64) - stats.mean) / stats.std).to(features.scalar_type());
}

torch::Tensor denormalize_by_class(const torch::Tensor& normalized, const ClassStats& stats) {
  check_dim(normalized, stats);
  return (normalized.to(torch::kFloat64) * stats.std + stats.mean).to(normalized.scalar_type());
}

FeatureSet normalize_by_class(const FeatureSet& set, const StatsTable& table) { return apply_by_class(set, table, true); }

FeatureSet denormalize_by_class(const FeatureSet& set, const StatsTable& table) {
  return apply_by_class(set, table, false);
}

namespace {
constexpr io::Magic kStatsMagic{'F', 'D', 'S', 'T'};
constexpr std::uint32_t kStatsVersion = 1;

std::vector<float> to_floats(const torch::Tensor& t) {
  auto f = t.to(torch::kFloat32).contiguous();
  return {f.data_ptr<float>(), f.data_ptr<float>() + f.numel()};
}
}  // namespace

void save_stats(const std::filesystem::path& path, const StatsTable& table) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write stats file " + path.string());
  const std::int64_t d = table.empty() ? 0 : table.begin()->second.dim();
  io::write_magic(os, kStatsMagic);
  io::write_le(os, kStatsVersion);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(table.size()));
  for (const auto& [id, st] : table) {
    if (st.dim() != d) throw ArgumentError("stats table mixes feature dimensions");
    io::write_le<std::int32_t>(os, id);
    io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(st.count));
    io::write_floats(os, to_floats(st.mean));
    io::write_floats(os, to_floats(st.std));
  }
  if (!os) throw IoError("failed writing stats file " + path.string());
}

StatsTable load_stats(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open stats file " + path.string());
  io::expect_magic(is, kStatsMagic, "class stats");
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kStatsVersion) throw IoError("unsupported stats version " + std::to_string(version));
  const auto d = io::read_le<std::uint32_t>(is);
  const auto n = io::read_le<std::uint32_t>(is);
  StatsTable table;
  for (std::uint32_t i = 0; i < n; ++i) {
    ClassStats st;
    st.class_id = io::read_le<std::int32_t>(is);
    st.count = static_cast<std::int64_t>(io::read_le<std::uint64_t>(is));
    auto m = io::read_floats(is, d);
    auto s = io::read_floats(is, d);
    st.mean = torch::tensor(m, torch::kFloat32).to(torch::kFloat64);
    st.std = torch::tensor(s, torch::kFloat32).to(torch::kFloat64);
    table.emplace(st.class_id, std::move(st));
  }
  return table;
}

}  // namespace featdiff
