#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "dueb/tensor.hpp"

namespace dueb {

/// Added after the softplus of the raw variance head; bounds sigma^2 away
/// from zero.
inline constexpr double kVarianceFloor = 1e-6;
/// Inside the square root of the per-pixel RMS normalization before the heads.
inline constexpr double kHeadNormEps = 1e-6;

struct ConvLayer {
  std::string name;
  int in = 0;
  int out = 0;
  int kernel = 3;
  int stride = 1;
  std::vector<double> weight;  // (out, in, kernel, kernel)
  std::vector<double> bias;    // (out)

  friend bool operator==(const ConvLayer&, const ConvLayer&) = default;
};

/// Weights of one branch: a 3x3 stem at full resolution, three stride-2
/// encoder convs, three upsample+concat+conv decoder stages fed by skip
/// connections, a parameter-free per-pixel RMS normalization over channels,
/// and two 1x1 heads (class logits, one variance channel).
struct BranchParams {
  enum Layer : int {
    kStem = 0,
    kEnc1,
    kEnc2,
    kEnc3,
    kDec3,
    kDec2,
    kDec1,
    kLogitHead,
    kVarianceHead,
    kNumLayers
  };

  int in_channels = 3;
  int num_classes = 0;
  int width = 0;
  std::vector<ConvLayer> layers;

  [[nodiscard]] std::size_t num_params() const;
  /// Same shapes, all values zero.
  [[nodiscard]] BranchParams zeros_like() const;

  /// Flat views in a fixed order: weight then bias of each layer.
  std::vector<std::span<double>> arrays();
  [[nodiscard]] std::vector<std::span<const double>> arrays() const;
  [[nodiscard]] std::vector<std::string> array_names() const;

  friend bool operator==(const BranchParams&, const BranchParams&) = default;
};

struct BranchOutput {
  Tensor logits;    // (n, C, H, W)
  Tensor variance;  // (n, 1, H, W), strictly positive
};

/// He-style uniform weights U(-sqrt(6/fan_in), sqrt(6/fan_in)) for hidden
/// convs, U(-1/sqrt(fan_in), 1/sqrt(fan_in)) for the heads, zero biases except
/// the variance head which starts near sigma^2 = 0.05.
BranchParams init_branch(std::uint64_t seed, int num_classes, int width,
                         int in_channels = 3);

/// Activations kept by a forward pass for the matching backward pass.
struct ForwardTape {
  std::vector<Tensor> inputs;       // per layer, what the conv consumed
  std::vector<Tensor> preacts;      // per layer, conv output before activation
  Tensor head_rms;                  // (n, 1, H, W) divisor of the head normalization
  Tensor variance_raw;
};

BranchOutput forward(const BranchParams& params, const Tensor& x);
BranchOutput forward(const BranchParams& params, const Tensor& x, ForwardTape& tape);

/// Accumulates dL/dparams into `grads` (which must have the shapes of
/// `params`) given dL/dlogits and dL/dvariance. Either upstream gradient may
/// be empty, meaning zero.
void backward(const BranchParams& params, const ForwardTape& tape, const Tensor& d_logits,
              const Tensor& d_variance, BranchParams& grads);

/// Per-pixel argmax over classes; ties resolve to the lowest class index.
LabelMap predict_hard(const Tensor& logits);
inline LabelMap predict_hard(const BranchOutput& out) { return predict_hard(out.logits); }

/// Softmax over the class axis.
Tensor softmax(const Tensor& logits);

/// Per-pixel maximum of a probability map, shape (n, 1, H, W).
Tensor max_probability(const Tensor& probs);

}  // namespace dueb
