#pragma once

#include <vector>

#include <torch/torch.h>

namespace featdiff {

/// Shape of the denoiser. A feature vector is treated as a one-channel
/// sequence of length d.
struct UNet1DConfig {
  std::int64_t length = 512;
  /// Channel widths of the initial block, each down block, and the middle block.
  std::vector<std::int64_t> widths{32, 32, 64, 64, 128};
  /// Number of real classes; id `num_classes` is the null (unconditional) token.
  std::int64_t num_classes = 100;
  int down_blocks = 3;
  int middle_blocks = 1;
  int up_blocks = 3;
  int convs_per_block = 4;
  std::int64_t stride = 4;
  /// Timestep/class embedding width; 0 means 4 * widths.front().
  std::int64_t embed_dim = 0;
  std::int64_t kernel_size = 3;
  std::int64_t norm_groups = 8;

  UNet1DConfig doubled() const;
  std::int64_t downsample_factor() const;
  /// `length` rounded up to a multiple of the total downsampling factor.
  std::int64_t padded_length() const;
  std::int64_t resolved_embed_dim() const;
  void validate() const;
};

/// Depthwise conv (kernel k, one filter per channel) followed by a 1x1 conv.
struct SeparableConv1dImpl : torch::nn::Module {
  SeparableConv1dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel);
  torch::Tensor forward(const torch::Tensor& x);

  torch::nn::Conv1d depthwise{nullptr}, pointwise{nullptr};
};
TORCH_MODULE(SeparableConv1d);

/// Pairs of (conv, norm, SiLU) units with a residual connection around each
/// pair; the embedding is injected after the first conv of every pair.
struct ConvBlockImpl : torch::nn::Module {
  ConvBlockImpl(std::int64_t channels, std::int64_t embed_dim, int convs, bool separable, std::int64_t kernel,
                std::int64_t groups);
  torch::Tensor forward(torch::Tensor x, const torch::Tensor& emb);

  torch::nn::ModuleList convs{nullptr};
  torch::nn::ModuleList norms{nullptr};
  torch::nn::ModuleList emb_proj{nullptr};

 private:
  bool separable_;
};
TORCH_MODULE(ConvBlock);

/// Attention-free 1-D U-Net with additive long skips and stride-4 resampling.
struct UNet1DImpl : torch::nn::Module {
  explicit UNet1DImpl(const UNet1DConfig& config);

  /// x: [B, 1, padded_length]; steps: [B] int64 (1-based); classes: [B] int64
  /// in [0, num_classes], where num_classes means "no condition".
  torch::Tensor forward(const torch::Tensor& x, const torch::Tensor& steps, const torch::Tensor& classes);

  const UNet1DConfig& config() const { return config_; }

 private:
  UNet1DConfig config_;
  std::int64_t embed_dim_;
  torch::nn::Sequential time_mlp{nullptr};
  torch::nn::Sequential class_mlp{nullptr};
  torch::nn::Conv1d stem{nullptr};
  ConvBlock initial{nullptr};
  torch::nn::ModuleList down{nullptr};
  torch::nn::ModuleList downsample{nullptr};
  torch::nn::ModuleList middle{nullptr};
  torch::nn::ModuleList upsample{nullptr};
  torch::nn::ModuleList up{nullptr};
  torch::nn::GroupNorm out_norm{nullptr};
  torch::nn::Conv1d out_conv{nullptr};
};
TORCH_MODULE(UNet1D);

/// Sinusoidal embedding of (possibly fractional) timesteps: [B] -> [B, dim].
torch::Tensor timestep_embedding(const torch::Tensor& steps, std::int64_t dim);

std::int64_t count_parameters(const torch::nn::Module& module);

}  // namespace featdiff
