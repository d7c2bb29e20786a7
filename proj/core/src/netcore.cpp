#include "dueb/netcore.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "dueb/rng.hpp"

namespace dueb {
namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using MapVec = Eigen::Map<Eigen::VectorXd>;

int out_extent(int in, int kernel, int stride) {
  const int pad = kernel / 2;
  return (in + 2 * pad - kernel) / stride + 1;
}

void im2col(const double* in, int channels, int h, int w, int kernel, int stride,
            int oh, int ow, double* col) {
  const int pad = kernel / 2;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        double* row = col + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) *
                                (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          double* dst = row + static_cast<std::size_t>(oy) * ow;
          if (iy < 0 || iy >= h) {
            std::fill(dst, dst + ow, 0.0);
            continue;
          }
          const double* src = in + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : 0.0;
          }
        }
      }
    }
  }
}

void col2im(const double* col, int channels, int h, int w, int kernel, int stride, int oh,
            int ow, double* in) {
  const int pad = kernel / 2;
  for (int c = 0; c < channels; ++c) {
    for (int ky = 0; ky < kernel; ++ky) {
      for (int kx = 0; kx < kernel; ++kx) {
        const double* row = col + ((static_cast<std::size_t>(c) * kernel + ky) * kernel + kx) *
                                      (static_cast<std::size_t>(oh) * ow);
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride + ky - pad;
          if (iy < 0 || iy >= h) continue;
          const double* src = row + static_cast<std::size_t>(oy) * ow;
          double* dst = in + (static_cast<std::size_t>(c) * h + iy) * w;
          for (int ox = 0; ox < ow; ++ox) {
            const int ix = ox * stride + kx - pad;
            if (ix >= 0 && ix < w) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

bool is_pointwise(const ConvLayer& L) { return L.kernel == 1 && L.stride == 1; }

Tensor conv_forward(const ConvLayer& L, const Tensor& in) {
  if (in.c() != L.in)
    throw std::invalid_argument("conv " + L.name + ": expected " + std::to_string(L.in) +
                                " input channels, got " + std::to_string(in.c()));
  const int oh = out_extent(in.h(), L.kernel, L.stride);
  const int ow = out_extent(in.w(), L.kernel, L.stride);
  const int patch = L.in * L.kernel * L.kernel;
  const std::size_t opix = static_cast<std::size_t>(oh) * ow;
  Tensor out({in.n(), L.out, oh, ow});
  ConstMapMat W(L.weight.data(), L.out, patch);
  std::vector<double> col;
  if (!is_pointwise(L)) col.resize(static_cast<std::size_t>(patch) * opix);
  for (int n = 0; n < in.n(); ++n) {
    const double* src = in.sample(n).data();
    if (!is_pointwise(L)) {
      im2col(src, L.in, in.h(), in.w(), L.kernel, L.stride, oh, ow, col.data());
      src = col.data();
    }
    MapMat Y(out.sample(n).data(), L.out, static_cast<Eigen::Index>(opix));
    Y.noalias() = W * ConstMapMat(src, patch, static_cast<Eigen::Index>(opix));
    Y.colwise() += Eigen::Map<const Eigen::VectorXd>(L.bias.data(), L.out);
  }
  return out;
}

/// Accumulates weight and bias gradients into G; returns dL/din when asked.
Tensor conv_backward(const ConvLayer& L, const Tensor& in, const Tensor& d_out, ConvLayer& G,
                     bool need_input_grad) {
  const int oh = d_out.h();
  const int ow = d_out.w();
  const int patch = L.in * L.kernel * L.kernel;
  const auto opix = static_cast<Eigen::Index>(static_cast<std::size_t>(oh) * ow);
  ConstMapMat W(L.weight.data(), L.out, patch);
  MapMat dW(G.weight.data(), L.out, patch);
  MapVec db(G.bias.data(), L.out);

  Tensor d_in;
  if (need_input_grad) d_in = Tensor(in.shape());
  std::vector<double> col;
  std::vector<double> dcol;
  if (!is_pointwise(L)) {
    col.resize(static_cast<std::size_t>(patch) * opix);
    if (need_input_grad) dcol.resize(col.size());
  }
  for (int n = 0; n < in.n(); ++n) {
    const double* src = in.sample(n).data();
    if (!is_pointwise(L)) {
      im2col(src, L.in, in.h(), in.w(), L.kernel, L.stride, oh, ow, col.data());
      src = col.data();
    }
    ConstMapMat dY(d_out.sample(n).data(), L.out, opix);
    dW.noalias() += dY * ConstMapMat(src, patch, opix).transpose();
    db += dY.rowwise().sum();
    if (need_input_grad) {
      if (is_pointwise(L)) {
        MapMat(d_in.sample(n).data(), patch, opix).noalias() = W.transpose() * dY;
      } else {
        MapMat(dcol.data(), patch, opix).noalias() = W.transpose() * dY;
        col2im(dcol.data(), L.in, in.h(), in.w(), L.kernel, L.stride, oh, ow,
               d_in.sample(n).data());
      }
    }
  }
  return d_in;
}

double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus(double x) { return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

Tensor silu(const Tensor& pre) {
  Tensor out(pre.shape());
  for (std::size_t i = 0; i < pre.size(); ++i) out.data()[i] = pre.data()[i] * sigmoid(pre.data()[i]);
  return out;
}

/// d_post * silu'(pre), in place into d_post.
void silu_backward(const Tensor& pre, Tensor& grad) {
  for (std::size_t i = 0; i < pre.size(); ++i) {
    const double x = pre.data()[i];
    const double s = sigmoid(x);
    grad.data()[i] *= s * (1.0 + x * (1.0 - s));
  }
}

Tensor upsample2(const Tensor& in) {
  Tensor out({in.n(), in.c(), in.h() * 2, in.w() * 2});
  for (int n = 0; n < in.n(); ++n)
    for (int c = 0; c < in.c(); ++c)
      for (int y = 0; y < out.h(); ++y)
        for (int x = 0; x < out.w(); ++x) out.at(n, c, y, x) = in.at(n, c, y / 2, x / 2);
  return out;
}

Tensor upsample2_backward(const Tensor& grad, int channel_offset, int channels) {
  Tensor out({grad.n(), channels, grad.h() / 2, grad.w() / 2});
  for (int n = 0; n < grad.n(); ++n)
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < grad.h(); ++y)
        for (int x = 0; x < grad.w(); ++x)
          out.at(n, c, y / 2, x / 2) += grad.at(n, c + channel_offset, y, x);
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w())
    throw std::invalid_argument("concat: spatial mismatch");
  Tensor out({a.n(), a.c() + b.c(), a.h(), a.w()});
  for (int n = 0; n < a.n(); ++n) {
    auto dst = out.sample(n).begin();
    const auto sa = a.sample(n);
    const auto sb = b.sample(n);
    dst = std::copy(sa.begin(), sa.end(), dst);
    std::copy(sb.begin(), sb.end(), dst);
  }
  return out;
}

void add_channels(Tensor& dst, const Tensor& grad, int channel_offset) {
  for (int n = 0; n < dst.n(); ++n)
    for (int c = 0; c < dst.c(); ++c)
      for (int y = 0; y < dst.h(); ++y)
        for (int x = 0; x < dst.w(); ++x) dst.at(n, c, y, x) += grad.at(n, c + channel_offset, y, x);
}

/// x / sqrt(mean_c x^2 + eps) at every pixel; writes the divisor to `rms`.
Tensor rms_normalize(const Tensor& x, Tensor& rms) {
  Tensor out(x.shape());
  rms = Tensor({x.n(), 1, x.h(), x.w()});
  const std::size_t plane = x.shape().plane();
  for (int n = 0; n < x.n(); ++n) {
    const double* src = x.sample(n).data();
    double* dst = out.sample(n).data();
    double* r = rms.sample(n).data();
    for (std::size_t i = 0; i < plane; ++i) {
      double sq = 0.0;
      for (int c = 0; c < x.c(); ++c) sq += src[c * plane + i] * src[c * plane + i];
      r[i] = std::sqrt(sq / x.c() + kHeadNormEps);
      for (int c = 0; c < x.c(); ++c) dst[c * plane + i] = src[c * plane + i] / r[i];
    }
  }
  return out;
}

/// In place: grad w.r.t. the normalized value -> grad w.r.t. the input.
void rms_backward(const Tensor& normalized, const Tensor& rms, Tensor& grad) {
  const std::size_t plane = grad.shape().plane();
  const int C = grad.c();
  for (int n = 0; n < grad.n(); ++n) {
    const double* y = normalized.sample(n).data();
    const double* r = rms.sample(n).data();
    double* g = grad.sample(n).data();
    for (std::size_t i = 0; i < plane; ++i) {
      double dot = 0.0;
      for (int c = 0; c < C; ++c) dot += g[c * plane + i] * y[c * plane + i];
      dot /= C;
      for (int c = 0; c < C; ++c) g[c * plane + i] = (g[c * plane + i] - y[c * plane + i] * dot) / r[i];
    }
  }
}

ConvLayer make_layer(std::string name, int in, int out, int kernel, int stride) {
  ConvLayer L;
  L.name = std::move(name);
  L.in = in;
  L.out = out;
  L.kernel = kernel;
  L.stride = stride;
  L.weight.assign(static_cast<std::size_t>(out) * in * kernel * kernel, 0.0);
  L.bias.assign(out, 0.0);
  return L;
}

void check_input(const BranchParams& p, const Tensor& x) {
  if (x.c() != p.in_channels)
    throw std::invalid_argument("forward: expected " + std::to_string(p.in_channels) +
                                " input channels, got " + std::to_string(x.c()));
  if (x.n() < 1 || x.h() % 8 != 0 || x.w() % 8 != 0 || x.h() < 8 || x.w() < 8)
    throw std::invalid_argument("forward: spatial size must be a positive multiple of 8, got " +
                                to_string(x.shape()));
}

struct Recorder {
  ForwardTape* tape;
  Tensor conv_act(const ConvLayer& L, Tensor in, bool activate) {
    Tensor pre = conv_forward(L, in);
    Tensor post = activate ? silu(pre) : pre;
    if (tape) {
      tape->inputs.push_back(std::move(in));
      tape->preacts.push_back(std::move(pre));
    }
    return post;
  }
};

BranchOutput run_forward(const BranchParams& p, const Tensor& x, ForwardTape* tape) {
  check_input(p, x);
  if (tape) {
    tape->inputs.clear();
    tape->preacts.clear();
  }
  Recorder rec{tape};
  const auto& L = p.layers;
  Tensor s0 = rec.conv_act(L[BranchParams::kStem], x, true);
  Tensor e1 = rec.conv_act(L[BranchParams::kEnc1], s0, true);
  Tensor e2 = rec.conv_act(L[BranchParams::kEnc2], e1, true);
  Tensor e3 = rec.conv_act(L[BranchParams::kEnc3], e2, true);
  Tensor d3 = rec.conv_act(L[BranchParams::kDec3], concat(upsample2(e3), e2), true);
  Tensor d2 = rec.conv_act(L[BranchParams::kDec2], concat(upsample2(d3), e1), true);
  Tensor d1 = rec.conv_act(L[BranchParams::kDec1], concat(upsample2(d2), s0), true);

  Tensor rms;
  const Tensor feat = rms_normalize(d1, rms);
  if (tape) tape->head_rms = std::move(rms);

  BranchOutput out;
  out.logits = rec.conv_act(L[BranchParams::kLogitHead], feat, false);
  Tensor raw = rec.conv_act(L[BranchParams::kVarianceHead], feat, false);
  out.variance = Tensor(raw.shape());
  for (std::size_t i = 0; i < raw.size(); ++i)
    out.variance.data()[i] = softplus(raw.data()[i]) + kVarianceFloor;
  if (tape) tape->variance_raw = std::move(raw);
  return out;
}

}  // namespace

std::size_t BranchParams::num_params() const {
  std::size_t n = 0;
  for (const auto& L : layers) n += L.weight.size() + L.bias.size();
  return n;
}

BranchParams BranchParams::zeros_like() const {
  BranchParams z = *this;
  for (auto& L : z.layers) {
    std::fill(L.weight.begin(), L.weight.end(), 0.0);
    std::fill(L.bias.begin(), L.bias.end(), 0.0);
  }
  return z;
}

std::vector<std::span<double>> BranchParams::arrays() {
  std::vector<std::span<double>> out;
  for (auto& L : layers) {
    out.emplace_back(L.weight);
    out.emplace_back(L.bias);
  }
  return out;
}

std::vector<std::span<const double>> BranchParams::arrays() const {
  std::vector<std::span<const double>> out;
  for (const auto& L : layers) {
    out.emplace_back(L.weight);
    out.emplace_back(L.bias);
  }
  return out;
}

std::vector<std::string> BranchParams::array_names() const {
  std::vector<std::string> out;
  for (const auto& L : layers) {
    out.push_back(L.name + ".weight");
    out.push_back(L.name + ".bias");
  }
  return out;
}

BranchParams init_branch(std::uint64_t seed, int num_classes, int width, int in_channels) {
  if (num_classes < 2) throw std::invalid_argument("init_branch: num_classes must be >= 2");
  if (width < 8) throw std::invalid_argument("init_branch: width must be >= 8");
  if (in_channels < 1) throw std::invalid_argument("init_branch: in_channels must be >= 1");

  BranchParams p;
  p.in_channels = in_channels;
  p.num_classes = num_classes;
  p.width = width;
  const int w = width;
  p.layers.push_back(make_layer("stem", in_channels, w, 3, 1));
  p.layers.push_back(make_layer("enc1", w, w, 3, 2));
  p.layers.push_back(make_layer("enc2", w, 2 * w, 3, 2));
  p.layers.push_back(make_layer("enc3", 2 * w, 4 * w, 3, 2));
  p.layers.push_back(make_layer("dec3", 4 * w + 2 * w, 2 * w, 3, 1));
  p.layers.push_back(make_layer("dec2", 2 * w + w, w, 3, 1));
  p.layers.push_back(make_layer("dec1", w + w, w, 3, 1));
  p.layers.push_back(make_layer("logit_head", w, num_classes, 1, 1));
  p.layers.push_back(make_layer("variance_head", w, 1, 1, 1));

  Rng rng = make_rng(seed, 0x1a77);
  for (std::size_t i = 0; i < p.layers.size(); ++i) {
    ConvLayer& L = p.layers[i];
    const double fan_in = static_cast<double>(L.in) * L.kernel * L.kernel;
    const bool head = i >= BranchParams::kLogitHead;
    const double bound = head ? 1.0 / std::sqrt(fan_in) : std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : L.weight) v = u(rng);
  }
  // softplus(-2.97) ~= 0.05
  std::fill(p.layers[BranchParams::kVarianceHead].bias.begin(),
            p.layers[BranchParams::kVarianceHead].bias.end(), -2.97);
  return p;
}

BranchOutput forward(const BranchParams& params, const Tensor& x) {
  return run_forward(params, x, nullptr);
}

BranchOutput forward(const BranchParams& params, const Tensor& x, ForwardTape& tape) {
  return run_forward(params, x, &tape);
}

void backward(const BranchParams& params, const ForwardTape& tape, const Tensor& d_logits,
              const Tensor& d_variance, BranchParams& grads) {
  if (tape.inputs.size() != BranchParams::kNumLayers)
    throw std::invalid_argument("backward: tape does not hold a full forward pass");
  const auto& L = params.layers;
  auto& G = grads.layers;
  const auto& in = tape.inputs;
  const auto& pre = tape.preacts;
  using P = BranchParams;

  Tensor g_d1(in[P::kLogitHead].shape());
  if (!d_logits.empty()) {
    g_d1 = conv_backward(L[P::kLogitHead], in[P::kLogitHead], d_logits, G[P::kLogitHead], true);
  }
  if (!d_variance.empty()) {
    Tensor d_raw = d_variance;
    for (std::size_t i = 0; i < d_raw.size(); ++i)
      d_raw.data()[i] *= sigmoid(tape.variance_raw.data()[i]);
    Tensor g = conv_backward(L[P::kVarianceHead], in[P::kVarianceHead], d_raw,
                             G[P::kVarianceHead], true);
    for (std::size_t i = 0; i < g.size(); ++i) g_d1.data()[i] += g.data()[i];
  }

  rms_backward(in[P::kLogitHead], tape.head_rms, g_d1);

  const int w = params.width;
  // dec1: input = [up(d2) (w ch), s0 (w ch)]
  silu_backward(pre[P::kDec1], g_d1);
  Tensor g_c1 = conv_backward(L[P::kDec1], in[P::kDec1], g_d1, G[P::kDec1], true);
  Tensor g_d2 = upsample2_backward(g_c1, 0, w);
  Tensor g_s0(in[P::kEnc1].shape());
  add_channels(g_s0, g_c1, w);

  // dec2: input = [up(d3) (2w), e1 (w)]
  silu_backward(pre[P::kDec2], g_d2);
  Tensor g_c2 = conv_backward(L[P::kDec2], in[P::kDec2], g_d2, G[P::kDec2], true);
  Tensor g_d3 = upsample2_backward(g_c2, 0, 2 * w);
  Tensor g_e1(in[P::kEnc2].shape());
  add_channels(g_e1, g_c2, 2 * w);

  // dec3: input = [up(e3) (4w), e2 (2w)]
  silu_backward(pre[P::kDec3], g_d3);
  Tensor g_c3 = conv_backward(L[P::kDec3], in[P::kDec3], g_d3, G[P::kDec3], true);
  Tensor g_e3 = upsample2_backward(g_c3, 0, 4 * w);
  Tensor g_e2(in[P::kEnc3].shape());
  add_channels(g_e2, g_c3, 4 * w);

  silu_backward(pre[P::kEnc3], g_e3);
  Tensor t = conv_backward(L[P::kEnc3], in[P::kEnc3], g_e3, G[P::kEnc3], true);
  for (std::size_t i = 0; i < t.size(); ++i) g_e2.data()[i] += t.data()[i];

  silu_backward(pre[P::kEnc2], g_e2);
  t = conv_backward(L[P::kEnc2], in[P::kEnc2], g_e2, G[P::kEnc2], true);
  for (std::size_t i = 0; i < t.size(); ++i) g_e1.data()[i] += t.data()[i];

  silu_backward(pre[P::kEnc1], g_e1);
  t = conv_backward(L[P::kEnc1], in[P::kEnc1], g_e1, G[P::kEnc1], true);
  for (std::size_t i = 0; i < t.size(); ++i) g_s0.data()[i] += t.data()[i];

  silu_backward(pre[P::kStem], g_s0);
  conv_backward(L[P::kStem], in[P::kStem], g_s0, G[P::kStem], false);
}

LabelMap predict_hard(const Tensor& logits) {
  LabelMap out(logits.n(), logits.h(), logits.w());
  for (int n = 0; n < logits.n(); ++n) {
    for (int y = 0; y < logits.h(); ++y) {
      for (int x = 0; x < logits.w(); ++x) {
        int best = 0;
        double best_v = logits.at(n, 0, y, x);
        for (int c = 1; c < logits.c(); ++c) {
          const double v = logits.at(n, c, y, x);
          if (v > best_v) {
            best_v = v;
            best = c;
          }
        }
        out.at(n, y, x) = best;
      }
    }
  }
  return out;
}

Tensor softmax(const Tensor& logits) {
  Tensor p(logits.shape());
  const std::size_t plane = logits.shape().plane();
  for (int n = 0; n < logits.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = -INFINITY;
      for (int c = 0; c < logits.c(); ++c) mx = std::max(mx, logits.data()[logits.index(n, c, 0, 0) + i]);
      double z = 0.0;
      for (int c = 0; c < logits.c(); ++c) {
        const std::size_t k = logits.index(n, c, 0, 0) + i;
        p.data()[k] = std::exp(logits.data()[k] - mx);
        z += p.data()[k];
      }
      for (int c = 0; c < logits.c(); ++c) p.data()[logits.index(n, c, 0, 0) + i] /= z;
    }
  }
  return p;
}

Tensor max_probability(const Tensor& probs) {
  Tensor out({probs.n(), 1, probs.h(), probs.w()});
  const std::size_t plane = probs.shape().plane();
  for (int n = 0; n < probs.n(); ++n) {
    for (std::size_t i = 0; i < plane; ++i) {
      double mx = 0.0;
      for (int c = 0; c < probs.c(); ++c) mx = std::max(mx, probs.data()[probs.index(n, c, 0, 0) + i]);
      out.data()[out.index(n, 0, 0, 0) + i] = mx;
    }
  }
  return out;
}

}  // namespace dueb
