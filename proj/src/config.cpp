#include "featdiff/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <variant>

#include "featdiff/errors.hpp"

namespace featdiff {

namespace {

using FieldRef = std::variant<std::string*, int*, std::int64_t*, std::uint64_t*, double*, bool*, float*,
                              std::vector<std::int64_t>*>;

struct Field {
  const char* key;
  FieldRef ref;
};

std::vector<Field> fields_of(ExperimentConfig& c) {
  return {
      {"dataset", &c.dataset},
      {"data_root", &c.data_root},
      {"initial_classes", &c.initial_classes},
      {"phases", &c.phases},
      {"order_seed", &c.order_seed},
      {"train_per_class", &c.train_per_class},
      {"test_per_class", &c.test_per_class},
      {"output_dir", &c.output_dir},

      {"shapes.per_class", &c.shapes.per_class},
      {"shapes.image_size", &c.shapes.image_size},
      {"shapes.noise", &c.shapes.noise},
      {"shapes.clutter", &c.shapes.clutter},
      {"shapes.min_radius", &c.shapes.min_radius},
      {"shapes.max_radius", &c.shapes.max_radius},
      {"shapes.max_shift", &c.shapes.max_shift},
      {"shapes.max_tilt_deg", &c.shapes.max_tilt_deg},
      {"shapes.seed", &c.shapes_seed},

      {"synthetic.kind", &c.synthetic_kind},
      {"synthetic.dim", &c.synthetic_dim},
      {"synthetic.classes", &c.synthetic_classes},
      {"synthetic.train_per_class", &c.synthetic_train_per_class},
      {"synthetic.test_per_class", &c.synthetic_test_per_class},
      {"synthetic.seed", &c.synthetic_seed},

      {"extractor.backbone", &c.extractor.backbone},
      {"extractor.feature_dim", &c.extractor.feature_dim},
      {"extractor.epochs", &c.extractor.epochs},
      {"extractor.batch_size", &c.extractor.batch_size},
      {"extractor.lr", &c.extractor.initial_lr},
      {"extractor.lambda", &c.extractor.lambda},
      {"extractor.momentum", &c.extractor.momentum},
      {"extractor.weight_decay", &c.extractor.weight_decay},
      {"extractor.head_hidden", &c.extractor.head_hidden},
      {"extractor.seed", &c.extractor.seed},

      {"augment.flip", &c.augmentation.horizontal_flip},
      {"augment.crop", &c.augmentation.random_crop},
      {"augment.crop_padding", &c.augmentation.crop_padding},
      {"augment.enhanced", &c.augmentation.enhanced},
      {"augment.cutout_size", &c.augmentation.cutout_size},
      {"augment.mean_r", &c.augmentation.mean[0]},
      {"augment.mean_g", &c.augmentation.mean[1]},
      {"augment.mean_b", &c.augmentation.mean[2]},
      {"augment.std_r", &c.augmentation.stddev[0]},
      {"augment.std_g", &c.augmentation.stddev[1]},
      {"augment.std_b", &c.augmentation.stddev[2]},

      {"diffusion.steps", &c.diffusion.steps},
      {"diffusion.sampling_steps", &c.diffusion.sampling_steps},
      {"diffusion.iterations", &c.diffusion.iterations},
      {"diffusion.batch_size", &c.diffusion.batch_size},
      {"diffusion.lr", &c.diffusion.lr},
      {"diffusion.ema_decay", &c.diffusion.ema_decay},
      {"diffusion.cond_drop_prob", &c.diffusion.cond_drop_prob},
      {"diffusion.guidance_scale", &c.diffusion.guidance_scale},
      {"diffusion.seed", &c.diffusion.seed},
      {"diffusion.log_every", &c.diffusion.log_every},
      {"unet.widths", &c.unet_widths},
      {"unet.double_initial", &c.unet_double_initial},

      {"classifier.epochs", &c.classifier.epochs},
      {"classifier.batch_size", &c.classifier.batch_size},
      {"classifier.lr", &c.classifier.lr},
      {"classifier.momentum", &c.classifier.momentum},
      {"classifier.weight_decay", &c.classifier.weight_decay},
      {"classifier.seed", &c.classifier.seed},

      {"replay.source", &c.replay_source},
      {"replay.per_class", &c.replay_per_class},
      {"replay.baseline", &c.baseline},
  };
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T value{};
  const auto* first = text.data();
  const auto* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) throw ConfigError("bad value '" + text + "' for " + key);
  return value;
}

double parse_real(const std::string& key, const std::string& text) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used == text.size()) return v;
  } catch (const std::exception&) {
  }
  throw ConfigError("bad value '" + text + "' for " + key);
}

struct Printer {
  std::string operator()(std::string* v) const { return *v; }
  std::string operator()(int* v) const { return std::to_string(*v); }
  std::string operator()(std::int64_t* v) const { return std::to_string(*v); }
  std::string operator()(std::uint64_t* v) const { return std::to_string(*v); }
  std::string operator()(double* v) const { return format_double(*v); }
  std::string operator()(float* v) const { return format_double(static_cast<double>(*v)); }
  std::string operator()(bool* v) const { return *v ? "true" : "false"; }
  std::string operator()(std::vector<std::int64_t>* v) const {
    std::string out;
    for (std::size_t i = 0; i < v->size(); ++i) out += (i ? "," : "") + std::to_string((*v)[i]);
    return out;
  }
};

struct Parser {
  const std::string& key;
  const std::string& text;
  void operator()(std::string* v) const { *v = text; }
  void operator()(int* v) const { *v = parse_number<int>(key, text); }
  void operator()(std::int64_t* v) const { *v = parse_number<std::int64_t>(key, text); }
  void operator()(std::uint64_t* v) const { *v = parse_number<std::uint64_t>(key, text); }
  void operator()(double* v) const { *v = parse_real(key, text); }
  void operator()(float* v) const { *v = static_cast<float>(parse_real(key, text)); }
  void operator()(bool* v) const {
    if (text == "true" || text == "1") {
      *v = true;
    } else if (text == "false" || text == "0") {
      *v = false;
    } else {
      throw ConfigError("bad boolean '" + text + "' for " + key);
    }
  }
  void operator()(std::vector<std::int64_t>* v) const {
    v->clear();
    std::istringstream is(text);
    std::string part;
    while (std::getline(is, part, ',')) v->push_back(parse_number<std::int64_t>(key, trim(part)));
  }
};

}  // namespace

int ExperimentConfig::num_classes() const {
  if (dataset == "cifar100") return 100;
  if (dataset == "cifar10") return 10;
  if (dataset == "shapes10") return kShapesClasses;
  if (dataset == "synthetic") return synthetic_classes;
  throw ConfigError("unknown dataset '" + dataset + "' (expected cifar10, cifar100, shapes10 or synthetic)");
}

void ExperimentConfig::validate() const {
  const int n = num_classes();
  if (initial_classes < 1 || initial_classes >= n) {
    throw ConfigError("initial_classes must be in [1, " + std::to_string(n - 1) + "]");
  }
  if (phases < 1) throw ConfigError("phases must be at least 1");
  if ((n - initial_classes) % phases != 0) {
    throw ConfigError(std::to_string(n - initial_classes) + " incremental classes do not split into " +
                      std::to_string(phases) + " equal phases");
  }
  if (replay_source != "diffusion" && replay_source != "gaussian" && replay_source != "real") {
    throw ConfigError("replay.source must be diffusion, gaussian or real");
  }
  if (baseline != "replay" && baseline != "masked") throw ConfigError("replay.baseline must be replay or masked");
  if (replay_per_class < 0) throw ConfigError("replay.per_class must be non-negative");
  if (dataset != "synthetic") extractor.validate();
  diffusion.validate();
  classifier.validate();
}

std::string ExperimentConfig::to_text() const {
  auto& self = const_cast<ExperimentConfig&>(*this);
  std::ostringstream os;
  for (const auto& f : fields_of(self)) os << f.key << " = " << std::visit(Printer{}, f.ref) << '\n';
  return os.str();
}

ExperimentConfig ExperimentConfig::from_text(const std::string& text) {
  ExperimentConfig c;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    c.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return c;
}

void ExperimentConfig::save(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw IoError("cannot write config " + path.string());
  os << to_text();
  if (!os) throw IoError("failed writing config " + path.string());
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open config " + path.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return from_text(ss.str());
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields_of(*this)) {
    if (key == f.key) {
      std::visit(Parser{key, value}, f.ref);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::string ExperimentConfig::get(const std::string& key) const {
  for (const auto& f : fields_of(const_cast<ExperimentConfig&>(*this))) {
    if (key == f.key) return std::visit(Printer{}, f.ref);
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::string> ExperimentConfig::keys() {
  ExperimentConfig c;
  std::vector<std::string> out;
  for (const auto& f : fields_of(c)) out.emplace_back(f.key);
  return out;
}

}  // namespace featdiff
