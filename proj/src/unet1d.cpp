#include "featdiff/unet1d.hpp"

#include <cmath>

#include "featdiff/errors.hpp"

namespace featdiff {
namespace nn = torch::nn;

UNet1DConfig UNet1DConfig::doubled() const {
  UNet1DConfig c = *this;
  for (auto& w : c.widths) w *= 2;
  if (c.embed_dim > 0) c.embed_dim *= 2;
  return c;
}

std::int64_t UNet1DConfig::downsample_factor() const {
  std::int64_t f = 1;
  for (int i = 0; i < down_blocks; ++i) f *= stride;
  return f;
}

std::int64_t UNet1DConfig::padded_length() const {
  const auto f = downsample_factor();
  return (length + f - 1) / f * f;
}

std::int64_t UNet1DConfig::resolved_embed_dim() const { return embed_dim > 0 ? embed_dim : 4 * widths.front(); }

void UNet1DConfig::validate() const {
  if (length < 1) throw ConfigError("U-Net input length must be positive");
  if (down_blocks < 1 || up_blocks != down_blocks) throw ConfigError("U-Net needs matching down/up block counts");
  if (middle_blocks < 1) throw ConfigError("U-Net needs at least one middle block");
  if (static_cast<int>(widths.size()) != down_blocks + 2) {
    throw ConfigError("U-Net widths must list the initial, " + std::to_string(down_blocks) +
                      " down and the middle block (" + std::to_string(down_blocks + 2) + " values)");
  }
  if (widths[0] != widths[1]) throw ConfigError("initial and first down block widths must match");
  if (convs_per_block < 2 || convs_per_block % 2 != 0) throw ConfigError("convs per block must be even and >= 2");
  if (stride < 2) throw ConfigError("U-Net stride must be at least 2");
  if (num_classes < 1) throw ConfigError("U-Net needs at least one class");
  for (auto w : widths) {
    if (w % norm_groups != 0) throw ConfigError("U-Net width " + std::to_string(w) + " not divisible by norm groups");
  }
}

SeparableConv1dImpl::SeparableConv1dImpl(std::int64_t in, std::int64_t out, std::int64_t kernel) {
  depthwise = register_module(
      "depthwise", nn::Conv1d(nn::Conv1dOptions(in, in, kernel).padding(kernel / 2).groups(in)));
  pointwise = register_module("pointwise", nn::Conv1d(nn::Conv1dOptions(in, out, 1)));
}

torch::Tensor SeparableConv1dImpl::forward(const torch::Tensor& x) { return pointwise(depthwise(x)); }

ConvBlockImpl::ConvBlockImpl(std::int64_t channels, std::int64_t embed_dim, int n_convs, bool separable,
                             std::int64_t kernel, std::int64_t groups)
    : separable_(separable) {
  convs = register_module("convs", nn::ModuleList());
  norms = register_module("norms", nn::ModuleList());
  emb_proj = register_module("emb_proj", nn::ModuleList());
  for (int i = 0; i < n_convs; ++i) {
    if (separable) {
      convs->push_back(SeparableConv1d(channels, channels, kernel));
    } else {
      convs->push_back(nn::Conv1d(nn::Conv1dOptions(channels, channels, kernel).padding(kernel / 2)));
    }
    norms->push_back(nn::GroupNorm(nn::GroupNormOptions(groups, channels)));
    if (i % 2 == 0) emb_proj->push_back(nn::Linear(embed_dim, channels));
  }
}

torch::Tensor ConvBlockImpl::forward(torch::Tensor x, const torch::Tensor& emb) {
  auto run = [this](std::size_t i, const torch::Tensor& in) {
    if (separable_) return convs->at<SeparableConv1dImpl>(i).forward(in);
    return convs->at<nn::Conv1dImpl>(i).forward(in);
  };
  for (std::size_t i = 0; i < convs->size(); i += 2) {
    auto h = torch::silu(norms->at<nn::GroupNormImpl>(i).forward(run(i, x)));
    h = h + emb_proj->at<nn::LinearImpl>(i / 2).forward(emb).unsqueeze(-1);
    h = torch::silu(norms->at<nn::GroupNormImpl>(i + 1).forward(run(i + 1, h)));
    x = x + h;
  }
  return x;
}

torch::Tensor timestep_embedding(const torch::Tensor& steps, std::int64_t dim) {
  const auto half = dim / 2;
  auto freqs = torch::exp(-std::log(10000.0) * torch::arange(half, torch::kFloat32) / static_cast<double>(half));
  auto args = steps.to(torch::kFloat32).unsqueeze(1) * freqs.unsqueeze(0);
  auto emb = torch::cat({torch::sin(args), torch::cos(args)}, 1);
  if (dim % 2 == 1) emb = torch::constant_pad_nd(emb, {0, 1}, 0.0);
  return emb;
}

UNet1DImpl::UNet1DImpl(const UNet1DConfig& config) : config_(config) {
  config_.validate();
  embed_dim_ = config_.resolved_embed_dim();
  const auto e = embed_dim_;
  const auto k = config_.kernel_size;
  const auto g = config_.norm_groups;
  const auto& w = config_.widths;
  const int convs = config_.convs_per_block;

  time_mlp = register_module("time_mlp", nn::Sequential(nn::Linear(e, e), nn::SiLU(), nn::Linear(e, e)));
  // One-hot class code (plus the null token) projected by a 2-layer MLP.
  class_mlp = register_module(
      "class_mlp", nn::Sequential(nn::Linear(config_.num_classes + 1, e), nn::SiLU(), nn::Linear(e, e)));

  stem = register_module("stem", nn::Conv1d(nn::Conv1dOptions(1, w[0], k).padding(k / 2)));
  initial = register_module("initial", ConvBlock(w[0], e, convs, /*separable=*/false, k, g));

  down = register_module("down", nn::ModuleList());
  downsample = register_module("downsample", nn::ModuleList());
  for (int i = 0; i < config_.down_blocks; ++i) {
    const auto c = w[static_cast<std::size_t>(i + 1)];
    const auto c_next = w[static_cast<std::size_t>(i + 2)];
    down->push_back(ConvBlock(c, e, convs, true, k, g));
    downsample->push_back(nn::Conv1d(nn::Conv1dOptions(c, c_next, config_.stride).stride(config_.stride)));
  }
  middle = register_module("middle", nn::ModuleList());
  for (int i = 0; i < config_.middle_blocks; ++i) middle->push_back(ConvBlock(w.back(), e, convs, true, k, g));

  upsample = register_module("upsample", nn::ModuleList());
  up = register_module("up", nn::ModuleList());
  for (int i = config_.up_blocks - 1; i >= 0; --i) {
    const auto c = w[static_cast<std::size_t>(i + 1)];
    const auto c_in = w[static_cast<std::size_t>(i + 2)];
    upsample->push_back(
        nn::ConvTranspose1d(nn::ConvTranspose1dOptions(c_in, c, config_.stride).stride(config_.stride)));
    up->push_back(ConvBlock(c, e, convs, true, k, g));
  }
  // The initial block's skip enters before the output head.
  out_norm = register_module("out_norm", nn::GroupNorm(nn::GroupNormOptions(g, w[0])));
  out_conv = register_module("out_conv", nn::Conv1d(nn::Conv1dOptions(w[0], 1, k).padding(k / 2)));
  {
    torch::NoGradGuard no_grad;
    out_conv->weight.zero_();
    out_conv->bias.zero_();
  }
}

torch::Tensor UNet1DImpl::forward(const torch::Tensor& x, const torch::Tensor& steps, const torch::Tensor& classes) {
  if (x.dim() != 3 || x.size(1) != 1 || x.size(2) != config_.padded_length()) {
    throw ArgumentError("U-Net expects input [B, 1, " + std::to_string(config_.padded_length()) + "]");
  }
  auto onehot = torch::one_hot(classes, config_.num_classes + 1).to(x.scalar_type());
  auto emb = time_mlp->forward(timestep_embedding(steps, embed_dim_)) + class_mlp->forward(onehot);

  auto h = initial->forward(stem(x), emb);
  std::vector<torch::Tensor> skips{h};
  // The first down block shares the initial block's width; the skip list holds
  // each level's output before resampling.
  for (std::size_t i = 0; i < down->size(); ++i) {
    h = down->at<ConvBlockImpl>(i).forward(h, emb);
    skips.push_back(h);
    h = downsample->at<nn::Conv1dImpl>(i).forward(h);
  }
  for (std::size_t i = 0; i < middle->size(); ++i) h = middle->at<ConvBlockImpl>(i).forward(h, emb);
  for (std::size_t i = 0; i < up->size(); ++i) {
    h = upsample->at<nn::ConvTranspose1dImpl>(i).forward(h);
    h = h + skips.back();
    skips.pop_back();
    h = up->at<ConvBlockImpl>(i).forward(h, emb);
  }
  h = h + skips.back();
  return out_conv(torch::silu(out_norm(h)));
}

std::int64_t count_parameters(const torch::nn::Module& module) {
  std::int64_t n = 0;
  for (const auto& p : module.parameters()) n += p.numel();
  return n;
}

}  // namespace featdiff
