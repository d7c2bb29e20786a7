#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dueb/tensor.hpp"

namespace dueb {

/// C x C pixel counts; (j, k) counts pixels where the conservative branch
/// says j and the progressive branch says k.
class AgreementMatrix {
 public:
  explicit AgreementMatrix(int num_classes)
      : classes_(num_classes), counts_(static_cast<std::size_t>(num_classes) * num_classes, 0) {}

  [[nodiscard]] int num_classes() const { return classes_; }
  std::int64_t& at(int j, int k) { return counts_[static_cast<std::size_t>(j) * classes_ + k]; }
  [[nodiscard]] std::int64_t at(int j, int k) const {
    return counts_[static_cast<std::size_t>(j) * classes_ + k];
  }
  [[nodiscard]] std::int64_t total() const;
  [[nodiscard]] std::int64_t row_sum(int j) const;
  [[nodiscard]] std::int64_t col_sum(int k) const;

  /// Plain-text grid, one row per line.
  [[nodiscard]] std::string str() const;

  friend bool operator==(const AgreementMatrix&, const AgreementMatrix&) = default;

 private:
  int classes_;
  std::vector<std::int64_t> counts_;
};

/// Counts over every pixel of the two maps (all samples of the batch).
AgreementMatrix agreement_matrix(const LabelMap& y_cw, const LabelMap& y_pw, int num_classes);
/// Counts over sample `n` only.
AgreementMatrix agreement_matrix(const LabelMap& y_cw, const LabelMap& y_pw, int num_classes,
                                 int n);

/// I_j = 2 - m_jj / row_j - m_jj / col_j, with 0/0 taken as 0.
std::vector<double> disagreement_indicator(const AgreementMatrix& m);

/// Where the agreement statistics are gathered.
enum class FuseScope { kPerImage, kPerBatch };

struct PseudoBundle {
  LabelMap y_inter;                  // ignore marker where the branches disagree
  LabelMap y_union;                  // defined everywhere
  Tensor w_u;                        // (n, 1, h, w), in (0, 1]
  std::vector<std::uint8_t> chose_c; // disagreement resolved to the conservative class
  std::vector<AgreementMatrix> matrices;        // one per sample, or one for the batch
  std::vector<std::vector<double>> indicators;  // parallel to `matrices`
};

/// Builds intersection and union pseudo-labels plus confidence weights.
/// A disagreement (j from the conservative map, k from the progressive map)
/// goes to j when I_j >= I_k, else to k; the weight is the winner's
/// confidence. Agreeing pixels get the mean confidence.
/// `conf_c` and `conf_p` are (n, 1, h, w) max-softmax maps in (0, 1].
PseudoBundle fuse(const LabelMap& y_cw, const LabelMap& y_pw, const Tensor& conf_c,
                  const Tensor& conf_p, int num_classes,
                  FuseScope scope = FuseScope::kPerImage);

/// Debug rasters for sample `n`: <prefix>_inter.pgm (ignored = 255),
/// <prefix>_union.pgm, <prefix>_weight.pgm (w * 255) and
/// <prefix>_agreement.txt.
void dump_fusion(const PseudoBundle& bundle, int num_classes, int n,
                 const std::filesystem::path& dir, const std::string& prefix);

}  // namespace dueb
