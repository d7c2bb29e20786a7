#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "dueb/rng.hpp"
#include "dueb/tensor.hpp"

namespace dueb {

/// A scalar loss with its gradients. d_variance is empty for losses that do
/// not read the variance map.
struct LossValue {
  double value = 0.0;
  Tensor d_logits;
  Tensor d_variance;
  std::size_t valid_pixels = 0;

  [[nodiscard]] bool no_valid_pixels() const { return valid_pixels == 0; }
};

/// 1 where labels[i] is a real class, 0 where it is the ignore marker.
/// Throws for values outside {0..C}.
std::vector<std::uint8_t> valid_mask(const LabelMap& labels, int num_classes);

/// Per-pixel softmax cross-entropy, zero at ignored pixels. Size n*h*w.
std::vector<double> ce_pixelwise(const Tensor& logits, const LabelMap& labels);

/// (1 / N_valid) * sum_i w_i * CE_i over non-ignored pixels. `weights` has
/// shape (n, 1, h, w); an empty tensor means w = 1. An all-ignored map gives
/// value 0 and valid_pixels == 0.
LossValue weighted_pseudo_ce(const Tensor& logits, const LabelMap& labels,
                             const Tensor& weights = {});

/// Standard normal draws for the logit distortion: T samples, each of the
/// logits' shape. Scaled by sqrt(sigma^2) inside the loss, so freezing these
/// freezes the noise for gradient checks.
struct AleatoricNoise {
  int samples = 0;
  std::vector<Tensor> z;
};
AleatoricNoise draw_aleatoric_noise(const Shape& logits_shape, int samples, Rng& rng);

/// Monte-Carlo heteroscedastic loss. For each sample t and valid pixel i:
///   diff = CE(y_hat) - CE(y_hat + sqrt(var) * z_t)
///   term = -ELU(diff) * l_u + l_u + (exp(var) - 1),  l_u = CE(y_hat)
/// averaged over valid pixels, then over samples. `variance` is (n, 1, h, w)
/// and shared by every class logit of a pixel. Optional `weights` multiply
/// each pixel's term.
LossValue aleatoric_loss(const Tensor& logits, const Tensor& variance, const LabelMap& labels,
                         const AleatoricNoise& noise, const Tensor& weights = {});
LossValue aleatoric_loss(const Tensor& logits, const Tensor& variance, const LabelMap& labels,
                         int samples, Rng& rng, const Tensor& weights = {});

/// Per-pixel log-sum-exp over classes, (n, 1, h, w).
Tensor log_sum_exp(const Tensor& logits);
/// E(x) = -LSE, per pixel.
Tensor energy(const Tensor& logits);

/// sign * mean LSE over pixels with valid[i] != 0 (all pixels if `valid` is empty).
LossValue energy_loss(const Tensor& logits, const std::vector<std::uint8_t>& valid = {},
                      int sign = +1);

struct LossConfig {
  double gamma_int = 1.0;
  double gamma_uni = 1.0;
  double gamma_ale = 1.0;
  double gamma_e = 1.0;
  int mc_samples = 10;
  int energy_sign = +1;
  bool use_ale = true;
  bool use_energy = true;
  bool weight_aleatoric = false;

  [[nodiscard]] double ale_weight() const { return use_ale ? gamma_ale : 0.0; }
  [[nodiscard]] double energy_weight() const { return use_energy ? gamma_e : 0.0; }

  friend bool operator==(const LossConfig&, const LossConfig&) = default;
};

/// Throws std::invalid_argument for T < 1 or a sign other than +-1.
void validate(const LossConfig& cfg);

struct LossParts {
  double sup = 0.0;
  double inter = 0.0;
  double uni = 0.0;
  double ale_c = 0.0;
  double ale_p = 0.0;
  double e_c = 0.0;
  double e_p = 0.0;
};

struct LossReport : LossParts {
  double total = 0.0;
};

/// Non-finite loss component; `part` names it.
class LossError : public std::runtime_error {
 public:
  LossError(std::string part, const std::string& what)
      : std::runtime_error(what), part_(std::move(part)) {}
  [[nodiscard]] const std::string& part() const { return part_; }

 private:
  std::string part_;
};

/// total = sup + g_int*inter + g_uni*uni + g_ale*(ale_c+ale_p) + g_e*(e_c+e_p).
LossReport combine(const LossParts& parts, const LossConfig& cfg);

}  // namespace dueb
