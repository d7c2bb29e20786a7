#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "dueb/augment.hpp"
#include "dueb/checkpoint.hpp"
#include "dueb/losses.hpp"
#include "dueb/netcore.hpp"
#include "dueb/pseudofuse.hpp"
#include "dueb/rng.hpp"
#include "dueb/synthgen.hpp"

namespace dueb {

struct TrainConfig {
  // data
  SceneSpec scene;
  int train_images = 160;
  int val_images = 16;
  int labeled_denominator = 8;  // 1 = every training image labeled
  std::uint64_t partition_seed = 11;

  // model
  int width = 8;

  // optimization
  double base_lr = 0.02;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double poly_power = 0.9;
  int max_iter = 500;
  int labeled_batch = 4;
  int unlabeled_batch = 2;  // image pairs per step
  double divergence_limit = 1e4;

  LossConfig loss;
  FuseScope fuse_scope = FuseScope::kPerImage;
  bool energy_on_labeled = true;

  int eval_every = 50;
  int panels = 4;

  std::uint64_t seed_c = 1;
  std::uint64_t seed_p = 2;
  std::uint64_t seed_data = 3;
  std::uint64_t seed_noise = 4;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Throws std::invalid_argument describing the first bad field.
void validate(const TrainConfig& cfg);

/// `key = value` lines; '#' starts a comment. Unknown keys are rejected.
TrainConfig parse_config(const std::string& text, TrainConfig base = {});
TrainConfig load_config(const std::filesystem::path& path, TrainConfig base = {});
/// Every key in a fixed order; parse_config(to_text(c)) == c.
std::string to_text(const TrainConfig& cfg);

/// base_lr * (1 - iter / max_iter)^power, clamped at 0.
double poly_lr(double base_lr, int iter, int max_iter, double power);

struct TrainState {
  BranchParams params_c;
  BranchParams params_p;
  BranchParams momentum_c;
  BranchParams momentum_p;
  int iter = 0;
  Rng rng_data;
  Rng rng_mask;
  Rng rng_noise;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

TrainState init_state(const TrainConfig& cfg);

struct Batch {
  Tensor x_l;    // labeled images
  LabelMap g_l;  // their ground truth
  Tensor x1;     // first image of each unlabeled pair; empty for supervised-only
  Tensor x2;
};

/// Replaces the CutMix sampler, e.g. to inject a known mask in tests.
using MaskSource = std::function<MixMask(int h, int w, Rng& rng)>;

/// Intermediate values of one step, filled when a trace is passed in.
struct StepTrace {
  std::vector<MixMask> masks;  // the masks used for both input and output mixing
  Tensor x_strong;
  LabelMap y_cw;
  LabelMap y_pw;
  PseudoBundle bundle;
  BranchParams grad_c;
  BranchParams grad_p;
};

/// One optimisation step on both branches:
///  1. sample one mask per pair, X_s = mix(X1, X2, m)
///  2. weak forwards of X1, X2 through both branches; Y_cw, Y_pw and the
///     confidence maps are mixed with the same masks
///  3. fuse into intersection / union pseudo-labels (detached targets)
///  4. strong forwards of X_s through both branches
///  5. supervised CE on the labeled batch for both branches (plus energy)
///  6. weighted CE, aleatoric and energy terms on the strong outputs
///  7. total loss, then SGD with momentum and weight decay at the poly rate
/// Throws LossError for a non-finite component and std::runtime_error when
/// the total exceeds cfg.divergence_limit.
LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                      StepTrace* trace = nullptr, const MaskSource* masks = nullptr);

/// In-memory scenes and partition for a config.
struct Dataset {
  std::vector<Scene> train;
  std::vector<Scene> val;
  std::vector<int> labeled;
  std::vector<int> unlabeled;

  static Dataset build(const TrainConfig& cfg);
};

struct StepRecord {
  int step = 0;
  double lr = 0.0;
  LossReport losses;
};

struct EvalRecord {
  int step = 0;  // number of completed steps
  double miou_c = 0.0;
  double miou_p = 0.0;
  std::vector<std::optional<double>> iou_c;
};

/// Owns the training state and drives train_step over a dataset. With an
/// output directory it writes losses.jsonl (one record per step),
/// metrics.jsonl (one record per evaluation), best.ckpt, last.ckpt,
/// metrics_summary.json and validation panels.
class Trainer {
 public:
  Trainer(TrainConfig cfg, std::filesystem::path out_dir = {});
  Trainer(TrainConfig cfg, const Dataset& data, std::filesystem::path out_dir = {});

  /// Restores everything needed to continue the trajectory bit-exactly.
  void resume(const std::filesystem::path& checkpoint);

  [[nodiscard]] bool done() const { return state_.iter >= cfg_.max_iter; }
  StepRecord step();
  /// Runs until max_iter (or `stop_after` more steps) and finalizes outputs
  /// when max_iter is reached.
  void run(std::optional<int> stop_after = std::nullopt);
  EvalRecord evaluate();

  [[nodiscard]] Checkpoint checkpoint() const;
  void save_checkpoint(const std::filesystem::path& path) const;

  [[nodiscard]] const TrainState& state() const { return state_; }
  [[nodiscard]] const TrainConfig& config() const { return cfg_; }
  [[nodiscard]] const std::vector<StepRecord>& steps() const { return steps_; }
  [[nodiscard]] const std::vector<EvalRecord>& history() const { return history_; }
  [[nodiscard]] double best_miou() const { return best_miou_; }

  /// When set, the fused pseudo-labels of each evaluated step are dumped here.
  void set_fusion_dump(std::filesystem::path dir) { fusion_dump_ = std::move(dir); }

 private:
  Batch sample_batch();
  void finalize();
  void append_log(const std::string& file, const std::string& line) const;

  TrainConfig cfg_;
  std::optional<Dataset> owned_;
  const Dataset* data_;
  std::filesystem::path out_;
  std::filesystem::path fusion_dump_;
  TrainState state_;
  std::vector<StepRecord> steps_;
  std::vector<EvalRecord> history_;
  double best_miou_ = -1.0;
};

/// JSON line for a step record.
std::string to_json_line(const StepRecord& r);
std::string to_json_line(const EvalRecord& r);

}  // namespace dueb
