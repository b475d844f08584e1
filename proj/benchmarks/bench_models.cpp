#include <benchmark/benchmark.h>
#include <torch/torch.h>

#include "faceedit/discriminator.hpp"
#include "faceedit/fid.hpp"
#include "faceedit/generator.hpp"
#include "faceedit/losses.hpp"
#include "faceedit/sampling.hpp"

using namespace faceedit;

namespace {

// Desk scale is 32px with three attributes; full scale is 128px with thirteen.
GeneratorConfig generator_config(std::int64_t res) {
  GeneratorConfig c;
  c.resolution = res;
  if (res == 32) {
    c.attributes = 3;
    c.levels = 3;
    c.base_width = 16;
  }
  return c;
}

DiscriminatorConfig discriminator_config(std::int64_t res) {
  DiscriminatorConfig c;
  c.resolution = res;
  if (res == 32) {
    c.attributes = 3;
    c.base_width = 16;
    c.blocks = 4;
    c.tap_blocks = 2;
    c.norm = NormKind::kNone;
  }
  return c;
}

void BM_GeneratorForward(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto res = state.range(0), batch = state.range(1);
  Generator g(generator_config(res));
  g->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({batch, 3, res, res}) * 2 - 1;
  auto d = torch::zeros({batch, g->config().attributes});
  for (auto _ : state) benchmark::DoNotOptimize(g->forward(x, d));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GeneratorForward)->Args({32, 32})->Args({128, 1})->Unit(benchmark::kMillisecond);

void BM_DiscriminatorForward(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto res = state.range(0), batch = state.range(1);
  Discriminator d(discriminator_config(res));
  d->eval();
  torch::NoGradGuard no_grad;
  auto x = torch::rand({batch, 3, res, res}) * 2 - 1;
  for (auto _ : state) benchmark::DoNotOptimize(d->forward(x));
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_DiscriminatorForward)->Args({32, 32})->Args({128, 1})->Unit(benchmark::kMillisecond);

// Penalty plus its backward pass into the critic's parameters.
void BM_GradientPenaltyStep(benchmark::State& state) {
  torch::set_num_threads(1);
  const auto res = state.range(0), batch = state.range(1);
  Discriminator d(discriminator_config(res));
  auto real = torch::rand({batch, 3, res, res}) * 2 - 1;
  auto fake = torch::rand({batch, 3, res, res}) * 2 - 1;
  auto rng = make_generator(1);
  Critic critic = [&](const torch::Tensor& t) { return d->critic(t); };
  for (auto _ : state) {
    d->zero_grad();
    auto gp = gradient_penalty(critic, real, fake, rng);
    gp.backward();
    benchmark::DoNotOptimize(gp);
  }
  state.SetItemsProcessed(state.iterations() * batch);
}
BENCHMARK(BM_GradientPenaltyStep)->Args({32, 32})->Args({128, 1})->Unit(benchmark::kMillisecond);

void BM_FrechetDistance(benchmark::State& state) {
  const auto n = state.range(0), dim = state.range(1);
  torch::manual_seed(0);
  auto a = torch::randn({n, dim}, torch::kFloat64);
  auto b = torch::randn({n, dim}, torch::kFloat64) * 1.1 + 0.2;
  for (auto _ : state) benchmark::DoNotOptimize(fid_from_features(a, b));
}
BENCHMARK(BM_FrechetDistance)->Args({256, 64})->Args({2000, 64})->Args({2000, 2048})->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
