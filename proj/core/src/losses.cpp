#include "dueb/losses.hpp"

#include <algorithm>
#include <cmath>

namespace dueb {
namespace {

void check_labels(const Tensor& logits, const LabelMap& labels) {
  if (labels.n() != logits.n() || labels.h() != logits.h() || labels.w() != logits.w())
    throw std::invalid_argument("loss: label map shape does not match logits " +
                                to_string(logits.shape()));
}

void check_map(const Tensor& logits, const Tensor& map, const char* what) {
  if (map.n() != logits.n() || map.c() != 1 || map.h() != logits.h() || map.w() != logits.w())
    throw std::invalid_argument(std::string("loss: ") + what + " must have shape (n, 1, h, w)");
}

// Softmax of one pixel's logits (strided by `plane`) into `p`; returns LSE.
double pixel_softmax(const double* z, std::size_t plane, int classes, double* p) {
  double mx = -INFINITY;
  for (int c = 0; c < classes; ++c) mx = std::max(mx, z[c * plane]);
  double s = 0.0;
  for (int c = 0; c < classes; ++c) {
    p[c] = std::exp(z[c * plane] - mx);
    s += p[c];
  }
  for (int c = 0; c < classes; ++c) p[c] /= s;
  return mx + std::log(s);
}

double elu(double x) { return x >= 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x >= 0.0 ? 1.0 : std::exp(x); }

}  // namespace

std::vector<std::uint8_t> valid_mask(const LabelMap& labels, int num_classes) {
  std::vector<std::uint8_t> v(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto y = labels[i];
    if (y < 0 || y > num_classes)
      throw std::invalid_argument("label value " + std::to_string(y) + " outside {0.." +
                                  std::to_string(num_classes) + "}");
    v[i] = y != ignore_label(num_classes);
  }
  return v;
}

std::vector<double> ce_pixelwise(const Tensor& logits, const LabelMap& labels) {
  check_labels(logits, labels);
  const int C = logits.c();
  const auto valid = valid_mask(labels, C);
  const std::size_t plane = logits.shape().plane();
  std::vector<double> out(labels.size(), 0.0);
  std::vector<double> p(C);
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = n * plane + i;
      if (!valid[k]) continue;
      const double* z = logits.raw() + logits.index(n, 0, 0, 0) + i;
      const double lse = pixel_softmax(z, plane, C, p.data());
      out[k] = lse - z[labels[k] * plane];
    }
  }
  return out;
}

LossValue weighted_pseudo_ce(const Tensor& logits, const LabelMap& labels, const Tensor& weights) {
  check_labels(logits, labels);
  if (!weights.empty()) check_map(logits, weights, "weights");
  const int C = logits.c();
  const auto valid = valid_mask(labels, C);
  const std::size_t plane = logits.shape().plane();

  LossValue out;
  out.d_logits = Tensor(logits.shape());
  for (auto v : valid) out.valid_pixels += v;
  if (out.valid_pixels == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(out.valid_pixels);

  std::vector<double> p(C);
  double sum = 0.0;
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = n * plane + i;
      if (!valid[k]) continue;
      const std::size_t base = logits.index(n, 0, 0, 0) + i;
      const double* z = logits.raw() + base;
      const double lse = pixel_softmax(z, plane, C, p.data());
      const int y = labels[k];
      const double w = weights.empty() ? 1.0 : weights.data()[k];
      sum += w * (lse - z[y * plane]);
      for (int c = 0; c < C; ++c)
        out.d_logits.data()[base + c * plane] = inv_n * w * (p[c] - (c == y ? 1.0 : 0.0));
    }
  }
  out.value = sum * inv_n;
  return out;
}

AleatoricNoise draw_aleatoric_noise(const Shape& logits_shape, int samples, Rng& rng) {
  if (samples < 1) throw std::invalid_argument("aleatoric noise: T must be >= 1");
  AleatoricNoise noise;
  noise.samples = samples;
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int t = 0; t < samples; ++t) {
    Tensor z(logits_shape);
    for (double& v : z.data()) v = normal(rng);
    noise.z.push_back(std::move(z));
  }
  return noise;
}

LossValue aleatoric_loss(const Tensor& logits, const Tensor& variance, const LabelMap& labels,
                         const AleatoricNoise& noise, const Tensor& weights) {
  check_labels(logits, labels);
  check_map(logits, variance, "variance");
  if (!weights.empty()) check_map(logits, weights, "weights");
  if (noise.samples < 1 || noise.z.size() != static_cast<std::size_t>(noise.samples))
    throw std::invalid_argument("aleatoric_loss: T must be >= 1");
  for (const auto& z : noise.z)
    if (!(z.shape() == logits.shape()))
      throw std::invalid_argument("aleatoric_loss: noise shape does not match logits");
  for (double v : variance.data())
    if (!(v > 0.0)) throw std::invalid_argument("aleatoric_loss: variance must be positive");

  const int C = logits.c();
  const int T = noise.samples;
  const auto valid = valid_mask(labels, C);
  const std::size_t plane = logits.shape().plane();

  LossValue out;
  out.d_logits = Tensor(logits.shape());
  out.d_variance = Tensor(variance.shape());
  for (auto v : valid) out.valid_pixels += v;
  if (out.valid_pixels == 0) return out;
  const double scale = 1.0 / (static_cast<double>(out.valid_pixels) * T);

  std::vector<double> pu(C), pt(C), ydist(C);
  double sum = 0.0;
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = n * plane + i;
      if (!valid[k]) continue;
      const std::size_t base = logits.index(n, 0, 0, 0) + i;
      const double* z = logits.raw() + base;
      const int y = labels[k];
      const double var = variance.data()[k];
      const double sd = std::sqrt(var);
      const double w = weights.empty() ? 1.0 : weights.data()[k];
      const double penalty = std::expm1(var);

      const double lu = pixel_softmax(z, plane, C, pu.data()) - z[y * plane];
      double* g = out.d_logits.raw() + base;
      double gv = 0.0;
      for (int t = 0; t < T; ++t) {
        const double* eps = noise.z[t].raw() + base;
        for (int c = 0; c < C; ++c) ydist[c] = z[c * plane] + sd * eps[c * plane];
        const double lt = pixel_softmax(ydist.data(), 1, C, pt.data()) - ydist[y];
        const double diff = lu - lt;
        const double e = elu(diff);
        const double de = elu_grad(diff);
        sum += w * (-e * lu + lu + penalty);

        // d/dlogits: -ELU'(diff) (g_u - g_t) l_u + (1 - ELU(diff)) g_u
        // d/dvar:    ELU'(diff) l_u (g_t . z_t) / (2 sd) + exp(var)
        double gt_dot_z = 0.0;
        for (int c = 0; c < C; ++c) {
          const double onehot = c == y ? 1.0 : 0.0;
          const double gu = pu[c] - onehot;
          const double gt = pt[c] - onehot;
          g[c * plane] += scale * w * (-de * (gu - gt) * lu + (1.0 - e) * gu);
          gt_dot_z += gt * eps[c * plane];
        }
        gv += scale * w * (de * lu * gt_dot_z / (2.0 * sd) + std::exp(var));
      }
      out.d_variance.data()[k] = gv;
    }
  }
  out.value = sum * scale;
  return out;
}

LossValue aleatoric_loss(const Tensor& logits, const Tensor& variance, const LabelMap& labels,
                         int samples, Rng& rng, const Tensor& weights) {
  if (samples < 1) throw std::invalid_argument("aleatoric_loss: T must be >= 1");
  return aleatoric_loss(logits, variance, labels,
                        draw_aleatoric_noise(logits.shape(), samples, rng), weights);
}

Tensor log_sum_exp(const Tensor& logits) {
  Tensor out({logits.n(), 1, logits.h(), logits.w()});
  const std::size_t plane = logits.shape().plane();
  const int C = logits.c();
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const double* z = logits.raw() + logits.index(n, 0, 0, 0) + i;
      double mx = -INFINITY;
      for (int c = 0; c < C; ++c) mx = std::max(mx, z[c * plane]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) s += std::exp(z[c * plane] - mx);
      out.data()[n * plane + i] = mx + std::log(s);
    }
  }
  return out;
}

Tensor energy(const Tensor& logits) {
  Tensor e = log_sum_exp(logits);
  for (double& v : e.data()) v = -v;
  return e;
}

LossValue energy_loss(const Tensor& logits, const std::vector<std::uint8_t>& valid, int sign) {
  if (sign != 1 && sign != -1) throw std::invalid_argument("energy_loss: sign must be +1 or -1");
  const std::size_t plane = logits.shape().plane();
  const std::size_t pixels = static_cast<std::size_t>(logits.n()) * plane;
  if (!valid.empty() && valid.size() != pixels)
    throw std::invalid_argument("energy_loss: valid mask size mismatch");

  LossValue out;
  out.d_logits = Tensor(logits.shape());
  for (std::size_t k = 0; k < pixels; ++k) out.valid_pixels += valid.empty() ? 1 : valid[k] != 0;
  if (out.valid_pixels == 0) return out;
  const double scale = sign / static_cast<double>(out.valid_pixels);

  const int C = logits.c();
  std::vector<double> p(C);
  double sum = 0.0;
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = n * plane + i;
      if (!valid.empty() && !valid[k]) continue;
      const std::size_t base = logits.index(n, 0, 0, 0) + i;
      sum += pixel_softmax(logits.raw() + base, plane, C, p.data());
      for (int c = 0; c < C; ++c) out.d_logits.data()[base + c * plane] = scale * p[c];
    }
  }
  out.value = sum * scale;
  return out;
}

void validate(const LossConfig& cfg) {
  if (cfg.mc_samples < 1) throw std::invalid_argument("LossConfig: mc_samples must be >= 1");
  if (cfg.energy_sign != 1 && cfg.energy_sign != -1)
    throw std::invalid_argument("LossConfig: energy_sign must be +1 or -1");
}

LossReport combine(const LossParts& parts, const LossConfig& cfg) {
  const std::pair<const char*, double> named[] = {
      {"sup", parts.sup},     {"int", parts.inter}, {"uni", parts.uni}, {"ale_c", parts.ale_c},
      {"ale_p", parts.ale_p}, {"e_c", parts.e_c},   {"e_p", parts.e_p},
  };
  for (const auto& [name, v] : named)
    if (!std::isfinite(v))
      throw LossError(name, std::string("non-finite loss component '") + name + "'");

  LossReport r;
  static_cast<LossParts&>(r) = parts;
  r.total = parts.sup + cfg.gamma_int * parts.inter + cfg.gamma_uni * parts.uni +
            cfg.ale_weight() * (parts.ale_c + parts.ale_p) +
            cfg.energy_weight() * (parts.e_c + parts.e_p);
  return r;
}

}  // namespace dueb
