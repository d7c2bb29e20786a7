#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "dueb/trainer.hpp"

namespace dueb {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

std::string fmt_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc{} || ptr != text.data() + text.size())
    throw std::invalid_argument("config: bad value for '" + key + "': " + text);
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw std::invalid_argument("config: '" + key + "' expects true/false, got " + text);
}

struct Field {
  const char* key;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
Field number(const char* key, T TrainConfig::*m) {
  return {key,
          [m](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.*m);
            else return std::to_string(c.*m);
          },
          [m, key](TrainConfig& c, const std::string& v) { c.*m = parse_number<T>(key, v); }};
}

template <typename T>
Field scene_number(const char* key, T SceneSpec::*m) {
  return {key,
          [m](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.scene.*m);
            else return std::to_string(c.scene.*m);
          },
          [m, key](TrainConfig& c, const std::string& v) { c.scene.*m = parse_number<T>(key, v); }};
}

template <typename T>
Field loss_number(const char* key, T LossConfig::*m) {
  return {key,
          [m](const TrainConfig& c) {
            if constexpr (std::is_floating_point_v<T>) return fmt_double(c.loss.*m);
            else return std::to_string(c.loss.*m);
          },
          [m, key](TrainConfig& c, const std::string& v) { c.loss.*m = parse_number<T>(key, v); }};
}

Field loss_flag(const char* key, bool LossConfig::*m) {
  return {key, [m](const TrainConfig& c) { return std::string(c.loss.*m ? "true" : "false"); },
          [m, key](TrainConfig& c, const std::string& v) { c.loss.*m = parse_bool(key, v); }};
}

const std::vector<Field>& fields() {
  static const std::vector<Field> kFields = {
      scene_number("image_size", &SceneSpec::image_size),
      scene_number("num_classes", &SceneSpec::num_classes),
      scene_number("min_shapes", &SceneSpec::min_shapes),
      scene_number("max_shapes", &SceneSpec::max_shapes),
      scene_number("noise_std", &SceneSpec::noise_std),
      scene_number("scene_seed", &SceneSpec::seed),
      number("train_images", &TrainConfig::train_images),
      number("val_images", &TrainConfig::val_images),
      {"labeled_fraction",
       [](const TrainConfig& c) {
         return c.labeled_denominator == 1 ? std::string("1")
                                           : "1/" + std::to_string(c.labeled_denominator);
       },
       [](TrainConfig& c, const std::string& v) {
         c.labeled_denominator = v == "1" ? 1 : LabeledFraction::parse(v).denominator();
       }},
      number("partition_seed", &TrainConfig::partition_seed),
      number("width", &TrainConfig::width),
      number("base_lr", &TrainConfig::base_lr),
      number("momentum", &TrainConfig::momentum),
      number("weight_decay", &TrainConfig::weight_decay),
      number("poly_power", &TrainConfig::poly_power),
      number("max_iter", &TrainConfig::max_iter),
      number("labeled_batch", &TrainConfig::labeled_batch),
      number("unlabeled_batch", &TrainConfig::unlabeled_batch),
      number("divergence_limit", &TrainConfig::divergence_limit),
      loss_number("gamma_int", &LossConfig::gamma_int),
      loss_number("gamma_uni", &LossConfig::gamma_uni),
      loss_number("gamma_ale", &LossConfig::gamma_ale),
      loss_number("gamma_e", &LossConfig::gamma_e),
      loss_number("mc_samples", &LossConfig::mc_samples),
      loss_number("energy_sign", &LossConfig::energy_sign),
      loss_flag("use_ale", &LossConfig::use_ale),
      loss_flag("use_energy", &LossConfig::use_energy),
      loss_flag("weight_aleatoric", &LossConfig::weight_aleatoric),
      {"fuse_scope",
       [](const TrainConfig& c) {
         return std::string(c.fuse_scope == FuseScope::kPerBatch ? "per_batch" : "per_image");
       },
       [](TrainConfig& c, const std::string& v) {
         if (v == "per_image") c.fuse_scope = FuseScope::kPerImage;
         else if (v == "per_batch") c.fuse_scope = FuseScope::kPerBatch;
         else throw std::invalid_argument("config: fuse_scope must be per_image or per_batch");
       }},
      {"energy_on_labeled",
       [](const TrainConfig& c) { return std::string(c.energy_on_labeled ? "true" : "false"); },
       [](TrainConfig& c, const std::string& v) {
         c.energy_on_labeled = parse_bool("energy_on_labeled", v);
       }},
      number("eval_every", &TrainConfig::eval_every),
      number("panels", &TrainConfig::panels),
      number("seed_c", &TrainConfig::seed_c),
      number("seed_p", &TrainConfig::seed_p),
      number("seed_data", &TrainConfig::seed_data),
      number("seed_noise", &TrainConfig::seed_noise),
  };
  return kFields;
}

}  // namespace

void validate(const TrainConfig& cfg) {
  validate(cfg.scene);
  validate(cfg.loss);
  auto require = [](bool ok, const char* msg) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + msg);
  };
  require(cfg.scene.image_size % 8 == 0, "image_size must be divisible by 8");
  require(cfg.train_images >= 16, "train_images must be >= 16");
  require(cfg.val_images >= 1, "val_images must be >= 1");
  require(cfg.labeled_denominator == 1 || cfg.labeled_denominator == 2 ||
              cfg.labeled_denominator == 4 || cfg.labeled_denominator == 8 ||
              cfg.labeled_denominator == 16,
          "labeled_fraction must be 1, 1/2, 1/4, 1/8 or 1/16");
  require(cfg.width >= 8, "width must be >= 8");
  require(cfg.base_lr > 0.0, "base_lr must be positive");
  require(cfg.momentum >= 0.0 && cfg.momentum < 1.0, "momentum must be in [0, 1)");
  require(cfg.weight_decay >= 0.0, "weight_decay must be >= 0");
  require(cfg.poly_power >= 0.0, "poly_power must be >= 0");
  require(cfg.max_iter >= 1, "max_iter must be >= 1");
  require(cfg.labeled_batch >= 1, "labeled_batch must be >= 1");
  require(cfg.unlabeled_batch >= 1, "unlabeled_batch must be >= 1");
  require(cfg.eval_every >= 1, "eval_every must be >= 1");
  require(cfg.panels >= 0, "panels must be >= 0");
}

TrainConfig parse_config(const std::string& text, TrainConfig base) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    bool found = false;
    for (const auto& f : fields()) {
      if (key == f.key) {
        f.set(base, value);
        found = true;
        break;
      }
    }
    if (!found) throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  return base;
}

TrainConfig load_config(const std::filesystem::path& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), std::move(base));
}

std::string to_text(const TrainConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) out += std::string(f.key) + " = " + f.get(cfg) + "\n";
  return out;
}

double poly_lr(double base_lr, int iter, int max_iter, double power) {
  if (max_iter <= 0) return 0.0;
  const double frac = 1.0 - static_cast<double>(iter) / static_cast<double>(max_iter);
  return frac <= 0.0 ? 0.0 : base_lr * std::pow(frac, power);
}

}  // namespace dueb
