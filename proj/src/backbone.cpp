#include "featdiff/backbone.hpp"

#include "featdiff/errors.hpp"

namespace featdiff {
namespace nn = torch::nn;

namespace {

void conv_bn_relu(nn::Sequential& seq, std::int64_t in, std::int64_t out) {
  seq->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 3).padding(1).bias(false)));
  seq->push_back(nn::BatchNorm2d(out));
  seq->push_back(nn::ReLU(nn::ReLUOptions(true)));
}

}  // namespace

SmallCnnImpl::SmallCnnImpl(std::int64_t feature_dim, std::int64_t in_channels) : dim_(feature_dim) {
  body = nn::Sequential();
  conv_bn_relu(body, in_channels, 32);
  body->push_back(nn::MaxPool2d(2));
  conv_bn_relu(body, 32, 64);
  body->push_back(nn::MaxPool2d(2));
  conv_bn_relu(body, 64, 128);
  body->push_back(nn::MaxPool2d(2));
  conv_bn_relu(body, 128, feature_dim);
  body->push_back(nn::AdaptiveAvgPool2d(1));
  body->push_back(nn::Flatten());
  register_module("body", body);
}

torch::Tensor SmallCnnImpl::forward(torch::Tensor x) { return body->forward(x); }

BasicBlockImpl::BasicBlockImpl(std::int64_t in, std::int64_t out, std::int64_t stride) {
  conv1 = register_module("conv1", nn::Conv2d(nn::Conv2dOptions(in, out, 3).stride(stride).padding(1).bias(false)));
  bn1 = register_module("bn1", nn::BatchNorm2d(out));
  conv2 = register_module("conv2", nn::Conv2d(nn::Conv2dOptions(out, out, 3).padding(1).bias(false)));
  bn2 = register_module("bn2", nn::BatchNorm2d(out));
  shortcut = nn::Sequential();
  if (stride != 1 || in != out) {
    shortcut->push_back(nn::Conv2d(nn::Conv2dOptions(in, out, 1).stride(stride).bias(false)));
    shortcut->push_back(nn::BatchNorm2d(out));
  }
  register_module("shortcut", shortcut);
}

torch::Tensor BasicBlockImpl::forward(torch::Tensor x) {
  auto y = torch::relu(bn1(conv1(x)));
  y = bn2(conv2(y));
  auto s = shortcut->is_empty() ? x : shortcut->forward(x);
  return torch::relu(y + s);
}

ResNet18Impl::ResNet18Impl(std::int64_t in_channels) {
  stem = register_module("stem", nn::Conv2d(nn::Conv2dOptions(in_channels, 64, 3).padding(1).bias(false)));
  stem_bn = register_module("stem_bn", nn::BatchNorm2d(64));
  layers = nn::Sequential();
  std::int64_t in = 64;
  for (std::int64_t width : {64, 128, 256, 512}) {
    const std::int64_t stride = width == 64 ? 1 : 2;
    layers->push_back(BasicBlock(in, width, stride));
    layers->push_back(BasicBlock(width, width, 1));
    in = width;
  }
  register_module("layers", layers);
}

torch::Tensor ResNet18Impl::forward(torch::Tensor x) {
  auto y = torch::relu(stem_bn(stem(x)));
  y = layers->forward(y);
  return torch::adaptive_avg_pool2d(y, {1, 1}).flatten(1);
}

std::shared_ptr<FeatureBackbone> make_backbone(const std::string& id, std::int64_t feature_dim) {
  if (feature_dim <= 0) throw ConfigError("feature dimension must be positive");
  if (id == "small_cnn") return std::make_shared<SmallCnnImpl>(feature_dim);
  if (id == "resnet18") {
    if (feature_dim != 512) {
      throw ConfigError("resnet18 produces 512-d features, config asks for " + std::to_string(feature_dim));
    }
    return std::make_shared<ResNet18Impl>();
  }
  throw ConfigError("unknown backbone '" + id + "'");
}

}  // namespace featdiff
