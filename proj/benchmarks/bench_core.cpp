#include <benchmark/benchmark.h>

#include "dueb/augment.hpp"
#include "dueb/losses.hpp"
#include "dueb/netcore.hpp"
#include "dueb/pseudofuse.hpp"
#include "dueb/trainer.hpp"

using namespace dueb;

namespace {

Tensor noise_tensor(Shape s, std::uint64_t seed) {
  Rng rng = make_rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(s);
  for (double& v : t.data()) v = u(rng);
  return t;
}

void BM_Forward(benchmark::State& st) {
  const int size = static_cast<int>(st.range(0));
  const BranchParams p = init_branch(1, 4, 8);
  const Tensor x = noise_tensor({2, 3, size, size}, 2);
  for (auto _ : st) benchmark::DoNotOptimize(forward(p, x));
  st.SetItemsProcessed(st.iterations() * 2);
}
BENCHMARK(BM_Forward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& st) {
  const int size = static_cast<int>(st.range(0));
  const BranchParams p = init_branch(1, 4, 8);
  const Tensor x = noise_tensor({2, 3, size, size}, 2);
  BranchParams g = p.zeros_like();
  for (auto _ : st) {
    ForwardTape tape;
    const BranchOutput out = forward(p, x, tape);
    backward(p, tape, out.logits, out.variance, g);
  }
}
BENCHMARK(BM_ForwardBackward)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

void BM_Fuse(benchmark::State& st) {
  const int size = static_cast<int>(st.range(0));
  Rng rng = make_rng(3);
  std::uniform_int_distribution<int> cls(0, 3);
  LabelMap a(2, size, size), b(2, size, size);
  for (auto& v : a.data()) v = cls(rng);
  for (auto& v : b.data()) v = cls(rng);
  const Tensor ca = noise_tensor({2, 1, size, size}, 4), cb = noise_tensor({2, 1, size, size}, 5);
  for (auto _ : st) benchmark::DoNotOptimize(fuse(a, b, ca, cb, 4));
}
BENCHMARK(BM_Fuse)->Arg(64)->Arg(256);

void BM_Aleatoric(benchmark::State& st) {
  const int samples = static_cast<int>(st.range(0));
  const Tensor z = noise_tensor({2, 4, 64, 64}, 6);
  const Tensor var = noise_tensor({2, 1, 64, 64}, 7);
  LabelMap y(2, 64, 64, 1);
  Rng rng = make_rng(8);
  for (auto _ : st) benchmark::DoNotOptimize(aleatoric_loss(z, var, y, samples, rng));
}
BENCHMARK(BM_Aleatoric)->Arg(1)->Arg(10)->Unit(benchmark::kMillisecond);

void BM_MaskSample(benchmark::State& st) {
  Rng rng = make_rng(9);
  for (auto _ : st) benchmark::DoNotOptimize(sample_mask(64, 64, rng));
}
BENCHMARK(BM_MaskSample);

void BM_TrainStep(benchmark::State& st) {
  TrainConfig cfg;
  cfg.scene.image_size = static_cast<int>(st.range(0));
  cfg.train_images = 16;
  cfg.val_images = 1;
  cfg.labeled_denominator = 4;
  cfg.max_iter = 1 << 30;
  Trainer t(cfg);
  for (auto _ : st) benchmark::DoNotOptimize(t.step());
}
BENCHMARK(BM_TrainStep)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
