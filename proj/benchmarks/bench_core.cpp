#include <benchmark/benchmark.h>

#include "streetsafe/medirl.hpp"
#include "streetsafe/reward.hpp"
#include "streetsafe/rl.hpp"
#include "streetsafe/synthetic.hpp"
#include "streetsafe/trueskill.hpp"

using namespace streetsafe;

namespace {

void BM_RewardForward(benchmark::State& state) {
  const auto p = init_params(1);
  const auto s = decode(StateId::unchecked(173));
  MlpTrace trace;
  for (auto _ : state) benchmark::DoNotOptimize(forward(p, s, trace));
}
BENCHMARK(BM_RewardForward);

void BM_RewardBackward(benchmark::State& state) {
  const auto p = init_params(1);
  const auto s = decode(StateId::unchecked(173));
  for (auto _ : state) benchmark::DoNotOptimize(backward(p, s, {0.3, -0.7}));
}
BENCHMARK(BM_RewardBackward);

void BM_LossGradient(benchmark::State& state) {
  SyntheticExpertConfig cfg;
  cfg.demos = 5000;
  const auto expert = make_synthetic_expert(cfg);
  const auto p = init_params(2);
  for (auto _ : state) benchmark::DoNotOptimize(loss_gradient(p, expert.softmax_demos));
}
BENCHMARK(BM_LossGradient)->Unit(benchmark::kMillisecond);

void BM_D3qnEpisodes(benchmark::State& state) {
  const ExpertReward reward([] {
    ExpertRewardConfig c;
    c.weights.fill(1.0);
    c.consistency_bonus = 0.5;
    return c;
  }());
  D3qnConfig cfg;
  cfg.episodes = static_cast<int>(state.range(0));
  for (auto _ : state) {
    SingleStepEnv env(StateSampler::uniform(), reward, 3);
    benchmark::DoNotOptimize(d3qn_train(env, cfg));
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_D3qnEpisodes)->Arg(1000)->Unit(benchmark::kMillisecond);

void BM_TrueSkillUpdate(benchmark::State& state) {
  PlayerRating a{27.0, 6.0, 4}, b{24.0, 7.0, 4};
  for (auto _ : state) benchmark::DoNotOptimize(update(a, b));
}
BENCHMARK(BM_TrueSkillUpdate);

}  // namespace

BENCHMARK_MAIN();
