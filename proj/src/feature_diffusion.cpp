#include "featdiff/feature_diffusion.hpp"

#include <ATen/CPUGeneratorImpl.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "featdiff/binary_io.hpp"
#include "featdiff/errors.hpp"
#include "featdiff/log.hpp"

namespace featdiff {

void DiffusionConfig::validate() const {
  if (steps < 1) throw ConfigError("diffusion steps must be at least 1");
  if (sampling_steps < 1 || sampling_steps > steps) throw ConfigError("sampling steps must be in [1, diffusion steps]");
  if (iterations < 1 || batch_size < 1) throw ConfigError("diffusion iterations and batch size must be positive");
  if (lr <= 0.0) throw ConfigError("diffusion learning rate must be positive");
  if (ema_decay < 0.0 || ema_decay >= 1.0) throw ConfigError("EMA decay must be in [0, 1)");
  if (cond_drop_prob < 0.0 || cond_drop_prob > 1.0) throw ConfigError("condition dropout must be in [0, 1]");
}

torch::Tensor cfg_combine(const torch::Tensor& eps_uncond, const torch::Tensor& eps_cond, double scale) {
  if (eps_uncond.sizes() != eps_cond.sizes()) throw ArgumentError("guidance inputs differ in shape");
  if (scale == 1.0) return eps_cond;
  if (scale == 0.0) return eps_uncond;
  return eps_uncond + scale * (eps_cond - eps_uncond);
}

std::int64_t GeneratorCheckpoint::condition_index(int class_id) const {
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] == class_id) return static_cast<std::int64_t>(i);
  }
  throw ArgumentError("class " + std::to_string(class_id) + " is not modelled by the phase-" + std::to_string(phase) +
                      " generator");
}

UNet1DConfig unet_config_for(std::int64_t feature_dim, std::int64_t num_classes, bool doubled,
                             const std::vector<std::int64_t>& base_widths) {
  UNet1DConfig c;
  c.length = feature_dim;
  c.num_classes = num_classes;
  c.widths = base_widths;
  c.down_blocks = static_cast<int>(base_widths.size()) - 2;
  c.up_blocks = c.down_blocks;
  return doubled ? c.doubled() : c;
}

torch::Tensor pad_features(const torch::Tensor& features, std::int64_t padded_length) {
  const auto d = features.size(1);
  auto x = d < padded_length ? torch::constant_pad_nd(features, {0, padded_length - d}, 0.0) : features;
  return x.unsqueeze(1);
}

torch::Tensor unpad_features(const torch::Tensor& sequences, std::int64_t feature_dim) {
  return sequences.squeeze(1).slice(1, 0, feature_dim).contiguous();
}

namespace {

void copy_parameters(UNet1D& dst, const UNet1D& src) {
  torch::NoGradGuard no_grad;
  auto d = dst->parameters();
  auto s = src->parameters();
  for (std::size_t i = 0; i < d.size(); ++i) d[i].copy_(s[i]);
}

void ema_update(UNet1D& ema, const UNet1D& live, double decay) {
  torch::NoGradGuard no_grad;
  auto e = ema->parameters();
  auto l = live->parameters();
  for (std::size_t i = 0; i < e.size(); ++i) e[i].mul_(decay).add_(l[i], 1.0 - decay);
}

}  // namespace

GeneratorCheckpoint train_generator(const FeatureSet& features, const NoiseSchedule& schedule,
                                    const UNet1DConfig& unet_config, const DiffusionConfig& config, int phase) {
  config.validate();
  if (features.size() == 0) throw ConfigError("generator training set is empty");
  const auto classes = features.classes();
  for (int c : classes) {
    if ((features.labels == c).sum().item<std::int64_t>() == 0) {
      throw ConfigError("class " + std::to_string(c) + " has no training features");
    }
  }
  if (static_cast<std::int64_t>(classes.size()) != unet_config.num_classes) {
    throw ConfigError("U-Net is sized for " + std::to_string(unet_config.num_classes) + " classes, data has " +
                      std::to_string(classes.size()));
  }
  if (unet_config.length != features.dim()) throw ConfigError("U-Net length does not match feature dimension");

  GeneratorCheckpoint ckpt;
  ckpt.phase = phase;
  ckpt.feature_dim = features.dim();
  ckpt.classes = classes;
  ckpt.schedule = schedule;
  ckpt.unet_config = unet_config;
  ckpt.guidance_scale = config.guidance_scale;

  torch::manual_seed(config.seed);
  UNet1D net(unet_config);
  UNet1D ema(unet_config);
  copy_parameters(ema, net);
  ema->eval();
  net->train();

  // Conditioning ids and padded sequences for the whole set.
  std::vector<std::int64_t> lut_values(static_cast<std::size_t>(classes.back() + 1), -1);
  for (std::size_t i = 0; i < classes.size(); ++i) lut_values[static_cast<std::size_t>(classes[i])] = static_cast<std::int64_t>(i);
  auto cond_all = torch::tensor(lut_values, torch::kInt64).index_select(0, features.labels);
  auto data = pad_features(features.features.to(torch::kFloat32), unet_config.padded_length());
  const auto n = data.size(0);
  const auto null_id = ckpt.null_condition();

  auto gen = at::make_generator<at::CPUGeneratorImpl>(config.seed ^ 0x5eedULL);
  torch::optim::Adam opt(net->parameters(), torch::optim::AdamOptions(config.lr));

  double window = 0.0;
  std::int64_t window_n = 0;
  for (std::int64_t it = 0; it < config.iterations; ++it) {
    auto idx = torch::randint(n, {config.batch_size}, gen, torch::kInt64);
    auto x0 = data.index_select(0, idx);
    auto cond = cond_all.index_select(0, idx);
    auto drop = torch::rand({config.batch_size}, gen) < config.cond_drop_prob;
    cond = torch::where(drop, torch::full_like(cond, null_id), cond);
    auto steps = torch::randint(1, schedule.steps + 1, {config.batch_size}, gen, torch::kInt64);
    auto noise = torch::randn(x0.sizes(), gen, torch::kFloat32);
    auto xk = forward_diffuse(x0, steps, schedule, noise);

    auto loss = torch::mse_loss(net->forward(xk, steps, cond), noise);
    const double value = loss.item<double>();
    if (!std::isfinite(value)) {
      throw DivergenceError("generator loss became non-finite at iteration " + std::to_string(it + 1) + " (phase " +
                            std::to_string(phase) + ")");
    }
    opt.zero_grad();
    loss.backward();
    opt.step();
    ema_update(ema, net, config.ema_decay);

    window += value;
    if (++window_n == config.log_every || it + 1 == config.iterations) {
      ckpt.loss_log.push_back(window / static_cast<double>(window_n));
      log::debug("generator phase ", phase, " iter ", it + 1, " loss ", ckpt.loss_log.back());
      window = 0.0;
      window_n = 0;
    }
  }
  for (auto& p : ema->parameters()) p.set_requires_grad(false);
  ckpt.net = ema;
  return ckpt;
}

namespace {

torch::Tensor guided_noise(const GeneratorCheckpoint& g, const torch::Tensor& x, std::int64_t step,
                           std::int64_t cond_id, double scale) {
  const auto b = x.size(0);
  auto steps = torch::full({b}, step, torch::kInt64);
  auto cond = torch::full({b}, cond_id, torch::kInt64);
  auto uncond = torch::full({b}, g.null_condition(), torch::kInt64);
  UNet1D net = g.net;
  if (scale == 1.0) return net->forward(x, steps, cond);
  if (scale == 0.0) return net->forward(x, steps, uncond);
  auto both = net->forward(torch::cat({x, x}), torch::cat({steps, steps}), torch::cat({uncond, cond}));
  auto parts = both.chunk(2, 0);
  return cfg_combine(parts[0], parts[1], scale);
}

}  // namespace

torch::Tensor sample_features(const GeneratorCheckpoint& generator, int class_id, std::int64_t count, int steps,
                              double scale, std::uint64_t seed) {
  const auto cond_id = generator.condition_index(class_id);
  const auto& sched = generator.schedule;
  const int k_max = sched.steps;
  if (steps < 1 || steps > k_max) throw ArgumentError("sampling steps must be in [1, " + std::to_string(k_max) + "]");
  if (count <= 0) return torch::empty({0, generator.feature_dim});

  torch::NoGradGuard no_grad;
  auto gen = at::make_generator<at::CPUGeneratorImpl>(seed);
  const auto length = generator.unet_config.padded_length();
  auto x = torch::randn({count, 1, length}, gen, torch::kFloat32);

  if (steps == k_max) {
    for (int k = k_max; k >= 1; --k) {
      const auto ku = static_cast<std::size_t>(k - 1);
      auto eps = guided_noise(generator, x, k, cond_id, scale);
      const double beta = sched.beta[ku];
      const double coef = beta / std::sqrt(1.0 - sched.alpha_bar[ku]);
      auto mean = (x - coef * eps) / std::sqrt(sched.alpha[ku]);
      if (k > 1) {
        x = mean + sched.sigma[ku] * torch::randn(x.sizes(), gen, torch::kFloat32);
      } else {
        x = mean;
      }
    }
  } else {
    std::vector<int> grid{0};
    for (int i = 1; i <= steps; ++i) {
      grid.push_back(static_cast<int>(std::lround(static_cast<double>(i) * k_max / steps)));
    }
    for (int i = steps; i >= 1; --i) {
      const int k = grid[static_cast<std::size_t>(i)];
      const int prev = grid[static_cast<std::size_t>(i - 1)];
      auto eps = guided_noise(generator, x, k, cond_id, scale);
      const double ab = sched.alpha_bar_at(k);
      const double ab_prev = sched.alpha_bar_at(prev);
      auto x0 = (x - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
      x = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
  }
  return unpad_features(x, generator.feature_dim);
}

namespace {
constexpr io::Magic kGeneratorMagic{'F', 'D', 'G', 'N'};
constexpr std::uint32_t kGeneratorVersion = 1;
}  // namespace

void GeneratorCheckpoint::save(const std::filesystem::path& path) const {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write generator checkpoint " + path.string());
  io::write_magic(os, kGeneratorMagic);
  io::write_le(os, kGeneratorVersion);
  io::write_le<std::int32_t>(os, phase);
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(feature_dim));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(classes.size()));
  io::write_ints(os, std::vector<std::int32_t>(classes.begin(), classes.end()));
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(schedule.steps));
  io::write_doubles(os, schedule.beta);
  io::write_le<std::uint8_t>(os, ema ? 1 : 0);
  io::write_le<double>(os, guidance_scale);

  const auto& u = unet_config;
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(u.widths.size()));
  for (auto w : u.widths) io::write_le<std::int64_t>(os, w);
  for (std::int64_t v : {u.length, u.num_classes, static_cast<std::int64_t>(u.down_blocks),
                         static_cast<std::int64_t>(u.middle_blocks), static_cast<std::int64_t>(u.up_blocks),
                         static_cast<std::int64_t>(u.convs_per_block), u.stride, u.embed_dim, u.kernel_size,
                         u.norm_groups}) {
    io::write_le<std::int64_t>(os, v);
  }
  io::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(loss_log.size()));
  io::write_doubles(os, loss_log);

  torch::serialize::OutputArchive archive;
  net->save(archive);
  std::ostringstream weights;
  archive.save_to(weights);
  io::write_blob(os, weights.str());
  if (!os) throw IoError("failed writing generator checkpoint " + path.string());
}

GeneratorCheckpoint GeneratorCheckpoint::load(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open generator checkpoint " + path.string());
  io::expect_magic(is, kGeneratorMagic, "generator checkpoint");
  const auto version = io::read_le<std::uint32_t>(is);
  if (version != kGeneratorVersion) throw IoError("unsupported generator checkpoint version " + std::to_string(version));
  GeneratorCheckpoint g;
  g.phase = io::read_le<std::int32_t>(is);
  g.feature_dim = io::read_le<std::uint32_t>(is);
  const auto n_classes = io::read_le<std::uint32_t>(is);
  const auto cls = io::read_ints(is, n_classes);
  g.classes.assign(cls.begin(), cls.end());
  const auto k = io::read_le<std::uint32_t>(is);
  g.schedule = NoiseSchedule::from_betas(io::read_doubles(is, k));
  g.ema = io::read_le<std::uint8_t>(is) != 0;
  g.guidance_scale = io::read_le<double>(is);

  auto& u = g.unet_config;
  const auto n_widths = io::read_le<std::uint32_t>(is);
  u.widths.clear();
  for (std::uint32_t i = 0; i < n_widths; ++i) u.widths.push_back(io::read_le<std::int64_t>(is));
  u.length = io::read_le<std::int64_t>(is);
  u.num_classes = io::read_le<std::int64_t>(is);
  u.down_blocks = static_cast<int>(io::read_le<std::int64_t>(is));
  u.middle_blocks = static_cast<int>(io::read_le<std::int64_t>(is));
  u.up_blocks = static_cast<int>(io::read_le<std::int64_t>(is));
  u.convs_per_block = static_cast<int>(io::read_le<std::int64_t>(is));
  u.stride = io::read_le<std::int64_t>(is);
  u.embed_dim = io::read_le<std::int64_t>(is);
  u.kernel_size = io::read_le<std::int64_t>(is);
  u.norm_groups = io::read_le<std::int64_t>(is);
  const auto n_log = io::read_le<std::uint32_t>(is);
  g.loss_log = io::read_doubles(is, n_log);

  g.net = UNet1D(u);
  std::istringstream weights(io::read_blob(is));
  torch::serialize::InputArchive archive;
  archive.load_from(weights);
  g.net->load(archive);
  g.net->eval();
  for (auto& p : g.net->parameters()) p.set_requires_grad(false);
  return g;
}

}  // namespace featdiff
