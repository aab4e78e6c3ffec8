#include "featdiff/features.hpp"

#include <fstream>

#include "featdiff/binary_io.hpp"
#include "featdiff/errors.hpp"

namespace featdiff {
namespace {
constexpr io::Magic kCacheMagic{'F', 'D', 'F', 'C'};
}

torch::Tensor FeatureSet::of_class(int class_id) const {
  auto mask = labels == class_id;
  return features.index({mask});
}

std::vector<int> FeatureSet::classes() const {
  if (size() == 0) return {};
  auto uniq = std::get<0>(torch::_unique(labels, /*sorted=*/true));
  auto acc = uniq.to(torch::kInt64).contiguous();
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(acc.numel()));
  for (std::int64_t i = 0; i < acc.numel(); ++i) out.push_back(static_cast<int>(acc[i].item<std::int64_t>()));
  return out;
}

std::vector<std::int64_t> FeatureSet::class_counts() const {
  std::vector<std::int64_t> counts;
  for (int c : classes()) counts.push_back((labels == c).sum().item<std::int64_t>());
  return counts;
}

FeatureSet concat(const std::vector<FeatureSet>& parts) {
  std::vector<torch::Tensor> feats, labels;
  for (const auto& p : parts) {
    if (p.size() == 0) continue;
    feats.push_back(p.features);
    labels.push_back(p.labels);
  }
  if (feats.empty()) return {};
  return {torch::cat(feats), torch::cat(labels), parts.front().phase};
}

void save_feature_cache(const std::filesystem::path& path, const FeatureSet& set) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write feature cache " + path.string());
  const auto feats = set.features.to(torch::kFloat32).contiguous();
  const auto labels = set.labels.to(torch::kInt64).contiguous();
  const auto n = set.size();
  const auto d = set.dim();
  io::write_magic(os, kCacheMagic);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(d));
  io::write_le<std::uint64_t>(os, static_cast<std::uint64_t>(n));
  const float* data = feats.data_ptr<float>();
  const std::int64_t* lab = labels.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < n; ++i) {
    io::write_le<std::int32_t>(os, static_cast<std::int32_t>(lab[i]));
    io::write_floats(os, {data + i * d, static_cast<std::size_t>(d)});
  }
  if (!os) throw IoError("failed writing feature cache " + path.string());
}

FeatureSet load_feature_cache(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open feature cache " + path.string());
  io::expect_magic(is, kCacheMagic, "feature cache");
  const auto d = static_cast<std::int64_t>(io::read_le<std::uint32_t>(is));
  const auto n = static_cast<std::int64_t>(io::read_le<std::uint64_t>(is));
  auto feats = torch::empty({n, d}, torch::kFloat32);
  auto labels = torch::empty({n}, torch::kInt64);
  float* data = feats.data_ptr<float>();
  std::int64_t* lab = labels.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < n; ++i) {
    lab[i] = io::read_le<std::int32_t>(is);
    for (std::int64_t k = 0; k < d; ++k) data[i * d + k] = io::read_le<float>(is);
  }
  return {feats, labels, -1};
}

}  // namespace featdiff
