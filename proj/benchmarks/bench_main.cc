#include <benchmark/benchmark.h>

#include <random>

#include "sdlab/codec.h"
#include "sdlab/cusim.h"
#include "sdlab/engine.h"

namespace sdlab {
namespace {

void BM_EncodeE3M0(benchmark::State& state) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> nd;
  std::vector<float> v(static_cast<std::size_t>(state.range(0)));
  for (float& x : v) x = nd(rng);
  for (auto _ : state) benchmark::DoNotOptimize(encode_e3m0(v));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_EncodeE3M0)->Arg(1 << 12)->Arg(1 << 16);

void BM_InnerStep(benchmark::State& state) {
  const ResidualNet net(ModelDims{8, 32, 4, 12});
  SyntheticTask<float> task(net, 0, static_cast<std::size_t>(state.range(0)));
  ReplicaState<float> r;
  r.params = net.init<float>(1);
  r.adam = AdamState<float>(net.num_params());
  long t = 0;
  for (auto _ : state) {
    ++t;
    benchmark::DoNotOptimize(inner_step(r, net, task.batch(0, t), t, AdamHyper{}));
  }
}
BENCHMARK(BM_InnerStep)->Arg(16)->Arg(32);

void BM_Simulate1b(benchmark::State& state) {
  const Profile p = load_profile(SDLAB_PROFILES_DIR, "1b");
  const auto method = static_cast<SimMethod>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(simulate(p.config(method, 10.0)).cu);
  state.SetLabel(to_string(method));
}
BENCHMARK(BM_Simulate1b)->DenseRange(0, 4)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace sdlab

BENCHMARK_MAIN();
