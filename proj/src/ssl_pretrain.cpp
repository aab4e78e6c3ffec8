#include "featdiff/ssl_pretrain.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "featdiff/binary_io.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/log.hpp"
#include "featdiff/lr_schedule.hpp"

namespace featdiff {
namespace nn = torch::nn;

void ExtractorConfig::validate() const {
  if (feature_dim <= 0) throw ConfigError("extractor feature_dim must be positive");
  if (lambda < 0.0) throw ConfigError("extractor lambda must be non-negative");
  if (epochs < 1) throw ConfigError("extractor epochs must be at least 1");
  if (batch_size < 1) throw ConfigError("extractor batch_size must be at least 1");
  if (initial_lr <= 0.0) throw ConfigError("extractor initial_lr must be positive");
}

SiameseHeadsImpl::SiameseHeadsImpl(std::int64_t feature_dim, std::int64_t initial_classes, std::int64_t hidden) {
  if (hidden <= 0) hidden = feature_dim;
  classifier = register_module("classifier", nn::Linear(feature_dim, 4 * initial_classes));
  projector = register_module(
      "projector", nn::Sequential(nn::Linear(feature_dim, hidden), nn::BatchNorm1d(hidden), nn::ReLU(),
                                  nn::Linear(hidden, hidden)));
  predictor = register_module(
      "predictor", nn::Sequential(nn::Linear(hidden, hidden), nn::BatchNorm1d(hidden), nn::ReLU(),
                                  nn::Linear(hidden, hidden)));
}

std::pair<torch::Tensor, std::int64_t> rotate_augment(const torch::Tensor& image, std::int64_t label, int rotation) {
  if (rotation < 0 || rotation > 3) throw ArgumentError("rotation index must be in {0,1,2,3}, got " + std::to_string(rotation));
  if (image.dim() < 2 || image.size(-1) != image.size(-2)) throw ArgumentError("rotation needs a square image");
  return {rotate_images(image, rotation), extended_label(label, rotation)};
}

torch::Tensor rotate_images(const torch::Tensor& images, int rotation) {
  if (rotation < 0 || rotation > 3) throw ArgumentError("rotation index must be in {0,1,2,3}, got " + std::to_string(rotation));
  if (rotation == 0) return images;
  return torch::rot90(images, rotation, {-2, -1}).contiguous();
}

torch::Tensor ce_loss(const torch::Tensor& logits, const torch::Tensor& extended_labels) {
  if (logits.dim() != 2) throw ArgumentError("logits must be [batch, classes]");
  const auto k = logits.size(1);
  if (extended_labels.numel() > 0) {
    const auto lo = extended_labels.min().item<std::int64_t>();
    const auto hi = extended_labels.max().item<std::int64_t>();
    if (lo < 0 || hi >= k) {
      throw ArgumentError("label out of range [0, " + std::to_string(k) + "): saw " + std::to_string(lo) + ".." +
                          std::to_string(hi));
    }
  }
  return torch::nn::functional::cross_entropy(logits, extended_labels);
}

torch::Tensor ssl_loss(const torch::Tensor& z_rotated, const torch::Tensor& z_reference) {
  auto ref = z_reference.detach();
  auto na = z_rotated.norm(2, -1);
  auto nb = ref.norm(2, -1);
  if ((na == 0).any().item<bool>() || (nb == 0).any().item<bool>()) {
    throw NumericError("cosine similarity of a zero-norm vector");
  }
  auto cos = (z_rotated * ref).sum(-1) / (na * nb).clamp_min(kCosineEpsilon);
  return (1.0 - cos).mean();
}

torch::Tensor combined_loss(const torch::Tensor& ce, const torch::Tensor& ssl, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be non-negative");
  return ce + lambda * ssl;
}

double combined_loss(double ce, double ssl, double lambda) {
  if (lambda < 0.0) throw ArgumentError("lambda must be non-negative");
  return ce + lambda * ssl;
}

FrozenExtractor::FrozenExtractor(std::shared_ptr<FeatureBackbone> net, std::uint64_t seed)
    : net_(std::move(net)), seed_(seed) {
  net_->eval();
  for (auto& p : net_->parameters()) p.set_requires_grad(false);
}

torch::Tensor FrozenExtractor::extract(const torch::Tensor& images) const {
  torch::NoGradGuard no_grad;
  return net_->forward(images).contiguous();
}

namespace {
constexpr io::Magic kExtractorMagic{'F', 'D', 'E', 'X'};
constexpr std::uint32_t kExtractorVersion = 1;
}  // namespace

void FrozenExtractor::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write extractor checkpoint " + path.string());
  io::write_magic(os, kExtractorMagic);
  io::write_le(os, kExtractorVersion);
  io::write_string(os, net_->id());
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(net_->feature_dim()));
  io::write_le<std::uint64_t>(os, seed_);
  torch::serialize::OutputArchive archive;
  net_->save(archive);
  std::ostringstream weights;
  archive.save_to(weights);
  io::write_blob(os, weights.str());
}

FrozenExtractor FrozenExtractor::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open extractor checkpoint " + path.string());
  io::expect_magic(is, kExtractorMagic, "extractor checkpoint");
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kExtractorVersion) throw IoError("unsupported extractor checkpoint version " + std::to_string(version));
  const auto id = io::read_string(is);
  const auto d = io::read_le<std::uint32_t>(is);
  const auto seed = io::read_le<std::uint64_t>(is);
  auto net = make_backbone(id, d);
  std::istringstream weights(io::read_blob(is));
  torch::serialize::InputArchive archive;
  archive.load_from(weights);
  net->load(archive);
  return FrozenExtractor(std::move(net), seed);
}

TrainedExtractor train_extractor(const ExtractorConfig& config, PhaseStream& phase0, std::int64_t initial_classes) {
  config.validate();
  if (initial_classes < 1) throw ConfigError("phase 0 needs at least one class");
  torch::manual_seed(config.seed);
  auto net = make_backbone(config.backbone, config.feature_dim);
  SiameseHeads heads(config.feature_dim, initial_classes, config.head_hidden);

  std::vector<torch::Tensor> params = net->parameters();
  for (auto& p : heads->parameters()) params.push_back(p);
  torch::optim::SGD opt(params, torch::optim::SGDOptions(config.initial_lr)
                                    .momentum(config.momentum)
                                    .weight_decay(config.weight_decay));
  const CosineAnnealingLr schedule(config.initial_lr, config.epochs);

  net->train();
  heads->train();
  TrainedExtractor out;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    schedule.apply<torch::optim::SGD, torch::optim::SGDOptions>(opt, epoch);
    phase0.start_epoch();
    double total = 0.0;
    std::int64_t steps = 0;
    while (auto batch = phase0.next()) {
      const auto b = batch->images.size(0);
      if (b < 2) continue;  // batch norm needs more than one sample
      std::vector<torch::Tensor> views, labels;
      for (int j = 0; j < 4; ++j) {
        views.push_back(rotate_images(batch->images, j));
        labels.push_back(batch->labels * 4 + j);
      }
      auto x_rot = torch::cat(views);
      auto y_rot = torch::cat(labels);
      auto x_ref = phase0.augment(batch->raw);

      auto f_rot = net->forward(x_rot);
      auto logits = heads->classifier(f_rot);
      auto p_rot = heads->predictor->forward(heads->projector->forward(f_rot));
      auto z_ref = heads->projector->forward(net->forward(x_ref));

      auto ce = ce_loss(logits, y_rot);
      auto ssl = ssl_loss(p_rot, z_ref.repeat({4, 1}));
      auto loss = combined_loss(ce, ssl, config.lambda);
      const double value = loss.item<double>();
      if (!std::isfinite(value)) {
        throw DivergenceError("extractor loss became non-finite at epoch " + std::to_string(epoch + 1) + ", step " +
                              std::to_string(steps + 1));
      }
      opt.zero_grad();
      loss.backward();
      opt.step();
      total += value;
      ++steps;
    }
    out.epoch_losses.push_back(steps > 0 ? total / static_cast<double>(steps) : 0.0);
    log::info("extractor epoch ", epoch + 1, "/", config.epochs, " loss ", out.epoch_losses.back());
  }
  out.extractor = FrozenExtractor(std::move(net), config.seed);
  return out;
}

FeatureSet extract_features(const FrozenExtractor& extractor, const ImageDataset& remapped,
                            const PhaseManifest& manifest, const AugmentationPolicy& policy,
                            std::int64_t expected_dim) {
  if (!extractor.valid()) throw ConfigError("extractor has not been trained or loaded");
  if (expected_dim > 0 && expected_dim != extractor.feature_dim()) {
    throw ConfigError("extractor produces " + std::to_string(extractor.feature_dim()) + "-d features, expected " +
                      std::to_string(expected_dim));
  }
  std::vector<bool> wanted(static_cast<std::size_t>(remapped.num_classes), false);
  for (int c : manifest.classes) wanted.at(static_cast<std::size_t>(c)) = true;
  auto lab = remapped.labels.contiguous();
  const auto* p = lab.data_ptr<std::int64_t>();
  std::vector<std::int64_t> idx;
  for (std::int64_t i = 0; i < lab.numel(); ++i) {
    if (wanted[static_cast<std::size_t>(p[i])]) idx.push_back(i);
  }
  auto sel = torch::tensor(idx, torch::kInt64);
  auto images = remapped.images.index_select(0, sel);
  const auto eval_policy = policy.evaluation();
  constexpr std::int64_t chunk = 256;
  std::vector<torch::Tensor> parts;
  for (std::int64_t s = 0; s < images.size(0); s += chunk) {
    const auto e = std::min(images.size(0), s + chunk);
    parts.push_back(extractor.extract(normalize_images(images.slice(0, s, e), eval_policy)));
  }
  FeatureSet out;
  out.features = parts.empty() ? torch::empty({0, extractor.feature_dim()}) : torch::cat(parts);
  out.labels = remapped.labels.index_select(0, sel);
  out.phase = manifest.phase;
  return out;
}

}  // namespace featdiff
