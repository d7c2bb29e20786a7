#include "dueb/trainer.hpp"

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <stdexcept>

#include "dueb/evalkit.hpp"

namespace dueb {
namespace {

void axpy(Tensor& dst, double a, const Tensor& src) {
  if (src.empty() || a == 0.0) return;
  if (dst.empty()) dst = Tensor(src.shape());
  for (std::size_t i = 0; i < src.size(); ++i) dst.data()[i] += a * src.data()[i];
}

void sgd_update(BranchParams& params, BranchParams& momentum, BranchParams& grads,
                const TrainConfig& cfg, double lr) {
  auto p = params.arrays();
  auto v = momentum.arrays();
  auto g = grads.arrays();
  for (std::size_t a = 0; a < p.size(); ++a) {
    for (std::size_t i = 0; i < p[a].size(); ++i) {
      const double grad = g[a][i] + cfg.weight_decay * p[a][i];
      v[a][i] = cfg.momentum * v[a][i] + grad;
      p[a][i] -= lr * v[a][i];
    }
  }
}

struct WeakView {
  LabelMap hard;  // mixed argmax
  Tensor conf;    // max of the mixed probabilities
};

WeakView weak_predictions(const BranchParams& params, const Tensor& x1, const Tensor& x2,
                          std::span<const MixMask> masks) {
  const Tensor p1 = softmax(forward(params, x1).logits);
  const Tensor p2 = softmax(forward(params, x2).logits);
  WeakView v;
  v.hard = mix(predict_hard(p1), predict_hard(p2), masks);
  v.conf = max_probability(mix(p1, p2, masks));
  return v;
}

/// Supervised CE (+ optional energy) on the labeled batch for one branch.
/// Returns gradients w.r.t. logits already scaled by the loss weights.
void supervised_terms(const BranchParams& params, const Batch& batch, const TrainConfig& cfg,
                      double& sup, double& energy_part, BranchParams& grads) {
  ForwardTape tape;
  const BranchOutput out = forward(params, batch.x_l, tape);
  LossValue ce = weighted_pseudo_ce(out.logits, batch.g_l);
  sup += ce.value;
  Tensor d_logits = std::move(ce.d_logits);
  if (cfg.energy_on_labeled && cfg.loss.energy_weight() != 0.0) {
    const LossValue e = energy_loss(out.logits, {}, cfg.loss.energy_sign);
    energy_part += e.value;
    axpy(d_logits, cfg.loss.energy_weight(), e.d_logits);
  }
  backward(params, tape, d_logits, {}, grads);
}

/// Pseudo-label, aleatoric and energy terms on the strong view for one branch.
void unsupervised_terms(const BranchParams& params, const Tensor& x_strong, const LabelMap& target,
                        const Tensor& w_u, double gamma_ce, const TrainConfig& cfg, Rng& noise_rng,
                        double& ce_part, double& ale_part, double& energy_part,
                        BranchParams& grads) {
  ForwardTape tape;
  const BranchOutput out = forward(params, x_strong, tape);
  const int C = params.num_classes;

  LossValue ce = weighted_pseudo_ce(out.logits, target, w_u);
  ce_part += ce.value;
  Tensor d_logits(out.logits.shape());
  Tensor d_var;
  axpy(d_logits, gamma_ce, ce.d_logits);

  if (cfg.loss.ale_weight() != 0.0) {
    const LossValue ale = aleatoric_loss(out.logits, out.variance, target, cfg.loss.mc_samples,
                                         noise_rng, cfg.loss.weight_aleatoric ? w_u : Tensor{});
    ale_part += ale.value;
    axpy(d_logits, cfg.loss.ale_weight(), ale.d_logits);
    axpy(d_var, cfg.loss.ale_weight(), ale.d_variance);
  }
  if (cfg.loss.energy_weight() != 0.0) {
    const LossValue e = energy_loss(out.logits, valid_mask(target, C), cfg.loss.energy_sign);
    energy_part += e.value;
    axpy(d_logits, cfg.loss.energy_weight(), e.d_logits);
  }
  backward(params, tape, d_logits, d_var, grads);
}

}  // namespace

TrainState init_state(const TrainConfig& cfg) {
  validate(cfg);
  TrainState s;
  s.params_c = init_branch(cfg.seed_c, cfg.scene.num_classes, cfg.width, 3);
  s.params_p = init_branch(cfg.seed_p, cfg.scene.num_classes, cfg.width, 3);
  s.momentum_c = s.params_c.zeros_like();
  s.momentum_p = s.params_p.zeros_like();
  s.rng_data = make_rng(cfg.seed_data, 1);
  s.rng_mask = make_rng(cfg.seed_data, 2);
  s.rng_noise = make_rng(cfg.seed_noise, 3);
  return s;
}

LossReport train_step(TrainState& state, const Batch& batch, const TrainConfig& cfg,
                      StepTrace* trace, const MaskSource* mask_source) {
  const double lr = poly_lr(cfg.base_lr, state.iter, cfg.max_iter, cfg.poly_power);
  BranchParams grad_c = state.params_c.zeros_like();
  BranchParams grad_p = state.params_p.zeros_like();
  LossParts parts;

  supervised_terms(state.params_c, batch, cfg, parts.sup, parts.e_c, grad_c);
  supervised_terms(state.params_p, batch, cfg, parts.sup, parts.e_p, grad_p);

  if (!batch.x1.empty()) {
    if (!(batch.x1.shape() == batch.x2.shape()))
      throw std::invalid_argument("train_step: unlabeled pair shapes differ");
    const int h = batch.x1.h();
    const int w = batch.x1.w();
    std::vector<MixMask> sampled;
    sampled.reserve(batch.x1.n());
    for (int i = 0; i < batch.x1.n(); ++i)
      sampled.push_back(mask_source ? (*mask_source)(h, w, state.rng_mask)
                                    : sample_mask(h, w, state.rng_mask));
    const std::vector<MixMask>& masks = sampled;

    const Tensor x_strong = mix(batch.x1, batch.x2, masks);
    const WeakView weak_c = weak_predictions(state.params_c, batch.x1, batch.x2, masks);
    const WeakView weak_p = weak_predictions(state.params_p, batch.x1, batch.x2, masks);
    const PseudoBundle bundle = fuse(weak_c.hard, weak_p.hard, weak_c.conf, weak_p.conf,
                                     cfg.scene.num_classes, cfg.fuse_scope);

    unsupervised_terms(state.params_c, x_strong, bundle.y_inter, bundle.w_u, cfg.loss.gamma_int,
                       cfg, state.rng_noise, parts.inter, parts.ale_c, parts.e_c, grad_c);
    unsupervised_terms(state.params_p, x_strong, bundle.y_union, bundle.w_u, cfg.loss.gamma_uni,
                       cfg, state.rng_noise, parts.uni, parts.ale_p, parts.e_p, grad_p);

    if (trace) {
      trace->masks = masks;
      trace->x_strong = x_strong;
      trace->y_cw = weak_c.hard;
      trace->y_pw = weak_p.hard;
      trace->bundle = bundle;
    }
  }

  const LossReport report = combine(parts, cfg.loss);
  if (!(std::abs(report.total) <= cfg.divergence_limit))
    throw std::runtime_error("train_step: total loss " + std::to_string(report.total) +
                             " exceeds divergence limit at iter " + std::to_string(state.iter));
  if (trace) {
    trace->grad_c = grad_c;
    trace->grad_p = grad_p;
  }
  sgd_update(state.params_c, state.momentum_c, grad_c, cfg, lr);
  sgd_update(state.params_p, state.momentum_p, grad_p, cfg, lr);
  ++state.iter;
  return report;
}

Dataset Dataset::build(const TrainConfig& cfg) {
  validate(cfg);
  Dataset d;
  d.train.reserve(cfg.train_images);
  for (int i = 0; i < cfg.train_images; ++i) d.train.push_back(generate_scene(cfg.scene, i));
  for (int i = 0; i < cfg.val_images; ++i)
    d.val.push_back(generate_scene(cfg.scene, cfg.train_images + i));
  if (cfg.labeled_denominator == 1) {
    for (int i = 0; i < cfg.train_images; ++i) d.labeled.push_back(i);
  } else {
    const Partition p = split_partition(
        {LabeledFraction(cfg.labeled_denominator), cfg.train_images, cfg.partition_seed});
    d.labeled = p.labeled;
    d.unlabeled = p.unlabeled;
  }
  return d;
}

std::string to_json_line(const StepRecord& r) {
  const nlohmann::json j = {{"step", r.step},           {"lr", r.lr},
                            {"sup", r.losses.sup},      {"int", r.losses.inter},
                            {"uni", r.losses.uni},      {"ale_c", r.losses.ale_c},
                            {"ale_p", r.losses.ale_p},  {"e_c", r.losses.e_c},
                            {"e_p", r.losses.e_p},      {"total", r.losses.total}};
  return j.dump();
}

std::string to_json_line(const EvalRecord& r) {
  nlohmann::json iou = nlohmann::json::array();
  for (const auto& v : r.iou_c) iou.push_back(v ? nlohmann::json(*v) : nlohmann::json(nullptr));
  const nlohmann::json j = {
      {"step", r.step}, {"miou_c", r.miou_c}, {"miou_p", r.miou_p}, {"iou_c", iou}};
  return j.dump();
}

namespace {

EvalRecord eval_record_from_json(const std::string& line) {
  const auto j = nlohmann::json::parse(line);
  EvalRecord r;
  r.step = j.at("step").get<int>();
  r.miou_c = j.at("miou_c").get<double>();
  r.miou_p = j.at("miou_p").get<double>();
  for (const auto& v : j.at("iou_c"))
    r.iou_c.push_back(v.is_null() ? std::nullopt : std::optional<double>(v.get<double>()));
  return r;
}

void put_params(Checkpoint& ck, const std::string& prefix, const BranchParams& p) {
  const auto names = p.array_names();
  const auto arrays = p.arrays();
  for (std::size_t i = 0; i < names.size(); ++i)
    ck.put(prefix + "/" + names[i], std::vector<double>(arrays[i].begin(), arrays[i].end()));
}

void get_params(const Checkpoint& ck, const std::string& prefix, BranchParams& p) {
  const auto names = p.array_names();
  auto arrays = p.arrays();
  for (std::size_t i = 0; i < names.size(); ++i) {
    const auto& v = ck.array(prefix + "/" + names[i]);
    if (v.size() != arrays[i].size())
      throw std::runtime_error("checkpoint: shape mismatch for " + prefix + "/" + names[i]);
    std::copy(v.begin(), v.end(), arrays[i].begin());
  }
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), owned_(Dataset::build(cfg_)), data_(&*owned_),
      out_(std::move(out_dir)), state_(init_state(cfg_)) {
  if (!out_.empty()) std::filesystem::create_directories(out_);
}

Trainer::Trainer(TrainConfig cfg, const Dataset& data, std::filesystem::path out_dir)
    : cfg_(std::move(cfg)), data_(&data), out_(std::move(out_dir)), state_(init_state(cfg_)) {
  if (!out_.empty()) std::filesystem::create_directories(out_);
}

Batch Trainer::sample_batch() {
  Batch b;
  const auto& d = *data_;
  std::vector<Tensor> xs;
  std::vector<LabelMap> gs;
  std::uniform_int_distribution<std::size_t> pick_l(0, d.labeled.size() - 1);
  for (int i = 0; i < cfg_.labeled_batch; ++i) {
    const Scene& s = d.train[d.labeled[pick_l(state_.rng_data)]];
    xs.push_back(s.image);
    gs.push_back(s.label);
  }
  b.x_l = stack(xs);
  b.g_l = stack(gs);
  if (!d.unlabeled.empty()) {
    std::uniform_int_distribution<std::size_t> pick_u(0, d.unlabeled.size() - 1);
    std::vector<Tensor> a, c;
    for (int i = 0; i < cfg_.unlabeled_batch; ++i) {
      a.push_back(d.train[d.unlabeled[pick_u(state_.rng_data)]].image);
      c.push_back(d.train[d.unlabeled[pick_u(state_.rng_data)]].image);
    }
    b.x1 = stack(a);
    b.x2 = stack(c);
  }
  return b;
}

void Trainer::append_log(const std::string& file, const std::string& line) const {
  if (out_.empty()) return;
  std::ofstream out(out_ / file, std::ios::app);
  out << line << '\n';
}

StepRecord Trainer::step() {
  if (done()) throw std::logic_error("Trainer::step: already at max_iter");
  const Batch batch = sample_batch();
  StepRecord rec;
  rec.step = state_.iter;
  rec.lr = poly_lr(cfg_.base_lr, state_.iter, cfg_.max_iter, cfg_.poly_power);
  StepTrace trace;
  const bool dump = !fusion_dump_.empty() && !batch.x1.empty() &&
                    ((state_.iter + 1) % cfg_.eval_every == 0 || state_.iter + 1 == cfg_.max_iter);
  rec.losses = train_step(state_, batch, cfg_, dump ? &trace : nullptr);
  steps_.push_back(rec);
  append_log("losses.jsonl", to_json_line(rec));
  if (dump) {
    char prefix[32];
    std::snprintf(prefix, sizeof prefix, "step_%06d", state_.iter);
    dump_fusion(trace.bundle, cfg_.scene.num_classes, 0, fusion_dump_, prefix);
  }

  if (state_.iter % cfg_.eval_every == 0 || state_.iter == cfg_.max_iter) {
    const EvalRecord ev = evaluate();
    history_.push_back(ev);
    append_log("metrics.jsonl", to_json_line(ev));
    if (ev.miou_c > best_miou_) {
      best_miou_ = ev.miou_c;
      if (!out_.empty()) save_checkpoint(out_ / "best.ckpt");
    }
  }
  return rec;
}

EvalRecord Trainer::evaluate() {
  const int C = cfg_.scene.num_classes;
  ConfusionMatrix cm_c(C), cm_p(C);
  constexpr int kChunk = 8;
  const auto& val = data_->val;
  for (std::size_t first = 0; first < val.size(); first += kChunk) {
    std::vector<Tensor> xs;
    std::vector<LabelMap> gs;
    for (std::size_t i = first; i < std::min(val.size(), first + kChunk); ++i) {
      xs.push_back(val[i].image);
      gs.push_back(val[i].label);
    }
    const Tensor x = stack(xs);
    const LabelMap g = stack(gs);
    accumulate(cm_c, predict_hard(forward(state_.params_c, x)), g);
    accumulate(cm_p, predict_hard(forward(state_.params_p, x)), g);
  }
  const IouResult rc = iou(cm_c);
  const IouResult rp = iou(cm_p);
  EvalRecord r;
  r.step = state_.iter;
  r.miou_c = rc.miou.value_or(0.0);
  r.miou_p = rp.miou.value_or(0.0);
  r.iou_c = rc.per_class;
  return r;
}

void Trainer::run(std::optional<int> stop_after) {
  int budget = stop_after.value_or(cfg_.max_iter);
  while (!done() && budget-- > 0) step();
  if (done()) finalize();
}

void Trainer::finalize() {
  if (out_.empty()) return;
  save_checkpoint(out_ / "last.ckpt");
  const int C = cfg_.scene.num_classes;
  ConfusionMatrix cm(C);
  const Palette palette = Palette::standard(C);
  for (std::size_t i = 0; i < data_->val.size(); ++i) {
    const Scene& s = data_->val[i];
    const LabelMap pred = predict_hard(forward(state_.params_c, s.image));
    accumulate(cm, pred, s.label);
    if (static_cast<int>(i) < cfg_.panels) {
      char name[32];
      std::snprintf(name, sizeof name, "val_%03zu.ppm", i);
      write_pnm(panel(to_raster(s.image, 0), render(pred, 0, palette), render(s.label, 0, palette)),
                out_ / name);
    }
  }
  write_metrics_summary(iou(cm), out_ / "metrics_summary.json");
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.put("config", to_text(cfg_));
  ck.put("iter", static_cast<std::uint64_t>(state_.iter));
  ck.put("seed_c", cfg_.seed_c);
  ck.put("seed_p", cfg_.seed_p);
  ck.put("arch/in_channels", static_cast<std::uint64_t>(state_.params_c.in_channels));
  ck.put("arch/num_classes", static_cast<std::uint64_t>(state_.params_c.num_classes));
  ck.put("arch/width", static_cast<std::uint64_t>(state_.params_c.width));
  put_params(ck, "branch_c", state_.params_c);
  put_params(ck, "branch_p", state_.params_p);
  put_params(ck, "momentum_c", state_.momentum_c);
  put_params(ck, "momentum_p", state_.momentum_p);
  ck.put("rng/data", save_rng(state_.rng_data));
  ck.put("rng/mask", save_rng(state_.rng_mask));
  ck.put("rng/noise", save_rng(state_.rng_noise));
  ck.put("best_miou", std::vector<double>{best_miou_});
  std::string hist;
  for (const auto& e : history_) hist += to_json_line(e) + "\n";
  ck.put("history", hist);
  return ck;
}

void Trainer::save_checkpoint(const std::filesystem::path& path) const { checkpoint().save(path); }

void Trainer::resume(const std::filesystem::path& path) {
  const Checkpoint ck = Checkpoint::load(path);
  const TrainConfig saved = parse_config(ck.text("config"));
  if (!(saved == cfg_))
    throw std::runtime_error("resume: checkpoint was written with a different configuration");
  state_.iter = static_cast<int>(ck.u64("iter"));
  get_params(ck, "branch_c", state_.params_c);
  get_params(ck, "branch_p", state_.params_p);
  get_params(ck, "momentum_c", state_.momentum_c);
  get_params(ck, "momentum_p", state_.momentum_p);
  state_.rng_data = load_rng(ck.text("rng/data"));
  state_.rng_mask = load_rng(ck.text("rng/mask"));
  state_.rng_noise = load_rng(ck.text("rng/noise"));
  best_miou_ = ck.array("best_miou").at(0);
  history_.clear();
  std::istringstream hist(ck.text("history"));
  for (std::string line; std::getline(hist, line);)
    if (!line.empty()) history_.push_back(eval_record_from_json(line));
  steps_.clear();
}

}  // namespace dueb
