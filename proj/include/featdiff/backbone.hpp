#pragma once

#include <memory>
#include <string>

#include <torch/torch.h>

namespace featdiff {

/// Image encoder mapping [B, C, H, W] to [B, feature_dim].
struct FeatureBackbone : torch::nn::Module {
  virtual torch::Tensor forward(torch::Tensor x) = 0;
  virtual std::int64_t feature_dim() const = 0;
  virtual std::string id() const = 0;
};

// -----------------------------------
// Four conv blocks + global pooling. Cheap enough for CPU-only runs.
// -----------------------------------
struct SmallCnnImpl : FeatureBackbone {
  explicit SmallCnnImpl(std::int64_t feature_dim = 128, std::int64_t in_channels = 3);
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t feature_dim() const override { return dim_; }
  std::string id() const override { return "small_cnn"; }

 private:
  std::int64_t dim_;
  torch::nn::Sequential body{nullptr};
};

// -----------------------------------
// 18-layer residual network, CIFAR stem (3x3 conv, no max-pool).
// -----------------------------------
struct BasicBlockImpl : torch::nn::Module {
  BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride);
  torch::Tensor forward(torch::Tensor x);

  torch::nn::Conv2d conv1{nullptr}, conv2{nullptr};
  torch::nn::BatchNorm2d bn1{nullptr}, bn2{nullptr};
  torch::nn::Sequential shortcut{nullptr};
};
TORCH_MODULE(BasicBlock);

struct ResNet18Impl : FeatureBackbone {
  explicit ResNet18Impl(std::int64_t in_channels = 3);
  torch::Tensor forward(torch::Tensor x) override;
  std::int64_t feature_dim() const override { return 512; }
  std::string id() const override { return "resnet18"; }

 private:
  torch::nn::Conv2d stem{nullptr};
  torch::nn::BatchNorm2d stem_bn{nullptr};
  torch::nn::Sequential layers{nullptr};
};

/// "small_cnn" or "resnet18". Throws ConfigError for an unknown id or when
/// `feature_dim` does not match what the backbone produces.
std::shared_ptr<FeatureBackbone> make_backbone(const std::string& id, std::int64_t feature_dim);

}  // namespace featdiff
