#include "featdiff/task_stream.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <numeric>
#include <sstream>

#include "featdiff/errors.hpp"
#include "featdiff/log.hpp"
#include "featdiff/random.hpp"

namespace featdiff {
namespace fs = std::filesystem;

std::string to_string(Split split) { return split == Split::Train ? "train" : "test"; }

ClassOrdering ClassOrdering::make(int num_classes, std::uint64_t seed) {
  if (num_classes < 1) throw ArgumentError("class ordering needs at least one class");
  ClassOrdering o;
  o.seed = seed;
  o.permutation.resize(static_cast<std::size_t>(num_classes));
  std::iota(o.permutation.begin(), o.permutation.end(), 0);
  std::mt19937_64 rng(seed);
  portable_shuffle(o.permutation, rng);
  return o;
}

ClassOrdering ClassOrdering::identity(int num_classes) {
  ClassOrdering o;
  o.permutation.resize(static_cast<std::size_t>(num_classes));
  std::iota(o.permutation.begin(), o.permutation.end(), 0);
  return o;
}

std::vector<int> ClassOrdering::inverse() const {
  std::vector<int> inv(permutation.size(), -1);
  for (std::size_t k = 0; k < permutation.size(); ++k) inv[static_cast<std::size_t>(permutation[k])] = static_cast<int>(k);
  return inv;
}

std::vector<PhaseManifest> build_phase_splits(int num_classes, int initial_count, int phases,
                                              std::uint64_t seed) {
  if (phases < 1) throw ConfigError("at least one incremental phase is required (got T=" + std::to_string(phases) + ")");
  if (initial_count < 1 || initial_count > num_classes) {
    throw ConfigError("initial class count " + std::to_string(initial_count) + " is outside [1, " +
                      std::to_string(num_classes) + "]");
  }
  const int remaining = num_classes - initial_count;
  if (remaining == 0 || remaining % phases != 0) {
    throw ConfigError("cannot split " + std::to_string(remaining) + " remaining classes (" +
                      std::to_string(num_classes) + " total, " + std::to_string(initial_count) +
                      " initial) evenly into " + std::to_string(phases) + " phases");
  }
  const int per_phase = remaining / phases;
  const auto ordering = ClassOrdering::make(num_classes, seed);

  std::vector<PhaseManifest> out;
  int next = 0;
  for (int t = 0; t <= phases; ++t) {
    PhaseManifest m;
    m.phase = t;
    const int count = t == 0 ? initial_count : per_phase;
    for (int k = 0; k < count; ++k, ++next) {
      m.classes.push_back(next);
      m.original_classes.push_back(ordering.permutation[static_cast<std::size_t>(next)]);
    }
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::vector<int> split_ints(const std::string& s) {
  std::vector<int> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(std::stoi(item));
  }
  return out;
}

}  // namespace

void write_manifests(const fs::path& path, const std::vector<PhaseManifest>& manifests) {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write manifests to " + path.string());
  for (const auto& m : manifests) {
    os << "phase=" << m.phase << " split=" << to_string(m.split) << " classes=" << join(m.classes)
       << " original=" << join(m.original_classes) << " samples=" << m.sample_count << '\n';
  }
}

std::vector<PhaseManifest> read_manifests(const fs::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot read manifests from " + path.string());
  std::vector<PhaseManifest> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    PhaseManifest m;
    std::istringstream ls(line);
    std::string field;
    while (ls >> field) {
      const auto eq = field.find('=');
      if (eq == std::string::npos) throw IoError("malformed manifest field '" + field + "'");
      const auto key = field.substr(0, eq);
      const auto value = field.substr(eq + 1);
      if (key == "phase") m.phase = std::stoi(value);
      else if (key == "split") m.split = value == "test" ? Split::Test : Split::Train;
      else if (key == "classes") m.classes = split_ints(value);
      else if (key == "original") m.original_classes = split_ints(value);
      else if (key == "samples") m.sample_count = std::stoll(value);
    }
    out.push_back(std::move(m));
  }
  return out;
}

ImageDataset ImageDataset::remap(const ClassOrdering& ordering) const {
  if (static_cast<int>(ordering.permutation.size()) != num_classes) {
    throw ConfigError("ordering covers " + std::to_string(ordering.permutation.size()) +
                      " classes but dataset has " + std::to_string(num_classes));
  }
  const auto inv = ordering.inverse();
  auto lut = torch::tensor(std::vector<std::int64_t>(inv.begin(), inv.end()), torch::kInt64);
  return {images, lut.index_select(0, labels), num_classes};
}

ImageDataset ImageDataset::subsample(std::int64_t per_class) const {
  if (per_class <= 0) return *this;
  std::vector<std::int64_t> seen(static_cast<std::size_t>(num_classes), 0);
  std::vector<std::int64_t> keep;
  auto lab = labels.contiguous();
  const auto* p = lab.data_ptr<std::int64_t>();
  for (std::int64_t i = 0; i < lab.numel(); ++i) {
    auto& s = seen[static_cast<std::size_t>(p[i])];
    if (s < per_class) {
      ++s;
      keep.push_back(i);
    }
  }
  auto idx = torch::tensor(keep, torch::kInt64);
  return {images.index_select(0, idx), labels.index_select(0, idx), num_classes};
}

namespace {

constexpr std::int64_t kCifarPixels = 3 * 32 * 32;

ImageDataset read_cifar_records(const std::vector<fs::path>& files, int label_bytes, int label_offset,
                                int num_classes) {
  std::vector<std::uint8_t> pixels;
  std::vector<std::int64_t> labels;
  const std::int64_t record = label_bytes + kCifarPixels;
  std::vector<char> buf(static_cast<std::size_t>(record));
  for (const auto& f : files) {
    std::ifstream is(f, std::ios::binary);
    if (!is) throw IoError("missing dataset file " + f.string());
    while (is.read(buf.data(), record)) {
      labels.push_back(static_cast<unsigned char>(buf[static_cast<std::size_t>(label_offset)]));
      pixels.insert(pixels.end(), buf.begin() + label_bytes, buf.end());
    }
  }
  const auto n = static_cast<std::int64_t>(labels.size());
  auto images = torch::from_blob(pixels.data(), {n, 3, 32, 32}, torch::kUInt8).clone();
  return {images, torch::tensor(labels, torch::kInt64), num_classes};
}

fs::path locate(const fs::path& root, const std::string& subdir, const std::string& probe) {
  if (!fs::exists(root)) throw IoError("dataset root does not exist: " + root.string());
  if (fs::exists(root / probe)) return root;
  if (fs::exists(root / subdir / probe)) return root / subdir;
  throw IoError("cannot find " + probe + " under " + root.string());
}

ImageDataset cached(const fs::path& dir, const std::string& name, Split split,
                    const std::function<ImageDataset()>& decode, int num_classes) {
  const auto cache = dir / (".featdiff_" + name + "_" + to_string(split) + ".pt");
  if (fs::exists(cache)) {
    std::vector<torch::Tensor> tensors;
    torch::load(tensors, cache.string());
    return {tensors.at(0), tensors.at(1), num_classes};
  }
  auto ds = decode();
  try {
    torch::save(std::vector<torch::Tensor>{ds.images, ds.labels}, cache.string());
  } catch (const std::exception& e) {
    log::warn("could not cache decoded ", name, " tensors: ", e.what());
  }
  return ds;
}

}  // namespace

ImageDataset load_cifar10(const fs::path& root, Split split) {
  const auto dir = locate(root, "cifar-10-batches-bin", "test_batch.bin");
  return cached(
      dir, "cifar10", split,
      [&] {
        std::vector<fs::path> files;
        if (split == Split::Train) {
          for (int i = 1; i <= 5; ++i) files.push_back(dir / ("data_batch_" + std::to_string(i) + ".bin"));
        } else {
          files.push_back(dir / "test_batch.bin");
        }
        return read_cifar_records(files, 1, 0, 10);
      },
      10);
}

ImageDataset load_cifar100(const fs::path& root, Split split) {
  const auto dir = locate(root, "cifar-100-binary", "test.bin");
  return cached(
      dir, "cifar100", split,
      [&] { return read_cifar_records({dir / (split == Split::Train ? "train.bin" : "test.bin")}, 2, 1, 100); },
      100);
}

AugmentationPolicy AugmentationPolicy::evaluation() const {
  AugmentationPolicy p = *this;
  p.horizontal_flip = false;
  p.random_crop = false;
  p.enhanced = false;
  return p;
}

torch::Tensor normalize_images(const torch::Tensor& images_u8, const AugmentationPolicy& policy) {
  auto x = images_u8.to(torch::kFloat32).div_(255.0f);
  const auto channels = x.size(1);
  auto mean = torch::tensor(std::vector<float>(policy.mean.begin(), policy.mean.end())).view({1, 3, 1, 1});
  auto sd = torch::tensor(std::vector<float>(policy.stddev.begin(), policy.stddev.end())).view({1, 3, 1, 1});
  if (channels != 3) {
    mean = mean.mean().view({1, 1, 1, 1});
    sd = sd.mean().view({1, 1, 1, 1});
  }
  return (x - mean) / sd;
}

torch::Tensor augment_images(const torch::Tensor& images_u8, const AugmentationPolicy& policy,
                             std::mt19937_64& rng) {
  using torch::indexing::Slice;
  auto x = images_u8.to(torch::kFloat32).div_(255.0f);
  const auto n = x.size(0);
  const auto h = x.size(2);
  const auto w = x.size(3);

  if (policy.random_crop && policy.crop_padding > 0) {
    const int p = policy.crop_padding;
    auto padded = torch::constant_pad_nd(x, {p, p, p, p}, 0.0);
    auto out = torch::empty_like(x);
    for (std::int64_t i = 0; i < n; ++i) {
      const auto dy = static_cast<std::int64_t>(uniform_index(rng, 2 * p + 1));
      const auto dx = static_cast<std::int64_t>(uniform_index(rng, 2 * p + 1));
      out[i] = padded[i].index({Slice(), Slice(dy, dy + h), Slice(dx, dx + w)});
    }
    x = out;
  }
  if (policy.horizontal_flip) {
    for (std::int64_t i = 0; i < n; ++i) {
      if (uniform_unit(rng) < 0.5) x[i] = x[i].flip({-1});
    }
  }
  if (policy.enhanced) {
    for (std::int64_t i = 0; i < n; ++i) {
      auto img = x[i];
      const double brightness = 0.6 + 0.8 * uniform_unit(rng);
      const double contrast = 0.6 + 0.8 * uniform_unit(rng);
      const double saturation = 0.6 + 0.8 * uniform_unit(rng);
      img = img * brightness;
      img = (img - img.mean()) * contrast + img.mean();
      auto gray = img.mean(0, /*keepdim=*/true);
      img = (img - gray) * saturation + gray;
      img = img.clamp(0.0, 1.0);
      const int cs = policy.cutout_size;
      const auto cy = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(h)));
      const auto cx = static_cast<std::int64_t>(uniform_index(rng, static_cast<std::uint64_t>(w)));
      const auto y0 = std::max<std::int64_t>(0, cy - cs / 2), y1 = std::min<std::int64_t>(h, cy + cs / 2);
      const auto x0 = std::max<std::int64_t>(0, cx - cs / 2), x1 = std::min<std::int64_t>(w, cx + cs / 2);
      img.index_put_({Slice(), Slice(y0, y1), Slice(x0, x1)}, 0.0);
      x[i] = img;
    }
  }
  // Undo the /255 so normalize_images' scaling applies exactly once.
  return normalize_images(x.mul(255.0f), policy);
}

PhaseStream::PhaseStream(const ImageDataset& remapped, const PhaseManifest& manifest, AugmentationPolicy policy,
                         std::int64_t batch_size, std::uint64_t seed)
    : policy_(manifest.split == Split::Test ? policy.evaluation() : policy),
      batch_size_(batch_size),
      split_(manifest.split),
      rng_(seed) {
  if (!remapped.images.defined()) throw IoError("phase stream over an empty dataset");
  if (batch_size < 1) throw ArgumentError("batch size must be positive");
  std::vector<bool> wanted(static_cast<std::size_t>(remapped.num_classes), false);
  for (int c : manifest.classes) wanted.at(static_cast<std::size_t>(c)) = true;
  auto lab = remapped.labels.contiguous();
  const auto* p = lab.data_ptr<std::int64_t>();
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < lab.numel(); ++i) {
    if (wanted[static_cast<std::size_t>(p[i])]) idx.push_back(i);
  }
  auto sel = torch::tensor(idx, torch::kInt64);
  images_ = remapped.images.index_select(0, sel);
  labels_ = remapped.labels.index_select(0, sel);
  indices_.resize(idx.size());
  std::iota(indices_.begin(), indices_.end(), 0);
  start_epoch();
}

std::int64_t PhaseStream::batches_per_epoch() const {
  return (sample_count() + batch_size_ - 1) / batch_size_;
}

void PhaseStream::start_epoch() {
  order_ = indices_;
  if (split_ == Split::Train) portable_shuffle(order_, rng_);
  cursor_ = 0;
}

std::optional<Batch> PhaseStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const auto end = std::min(order_.size(), cursor_ + static_cast<std::size_t>(batch_size_));
  std::vector<std::int64_t> chunk(order_.begin() + static_cast<std::ptrdiff_t>(cursor_),
                                  order_.begin() + static_cast<std::ptrdiff_t>(end));
  cursor_ = end;
  auto sel = torch::tensor(chunk, torch::kInt64);
  auto raw = images_.index_select(0, sel);
  Batch b;
  b.labels = labels_.index_select(0, sel);
  b.raw = raw;
  b.images = split_ == Split::Train ? augment_images(raw, policy_, rng_) : normalize_images(raw, policy_);
  return b;
}

torch::Tensor PhaseStream::augment(const torch::Tensor& raw) {
  return split_ == Split::Train ? augment_images(raw, policy_, rng_) : normalize_images(raw, policy_);
}

}  // namespace featdiff
