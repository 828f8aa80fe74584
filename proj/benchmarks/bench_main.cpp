#include <benchmark/benchmark.h>

#include "xeroalign/data.hpp"
#include "xeroalign/encoder.hpp"
#include "xeroalign/heads.hpp"
#include "xeroalign/metrics.hpp"
#include "xeroalign/ops.hpp"
#include "xeroalign/optim.hpp"
#include "xeroalign/rng.hpp"

using namespace xeroalign;

namespace {

Tensor random(Shape s, Rng& rng, bool grad = false) {
  std::vector<double> v(shape_numel(s));
  for (auto& x : v) x = rng.normal();
  return Tensor(std::move(s), std::move(v), grad);
}

TokenBatch random_batch(std::size_t batch, std::size_t length, std::size_t vocab, Rng& rng) {
  TokenBatch b;
  b.batch = batch;
  b.length = length;
  for (std::size_t r = 0; r < batch; ++r) {
    const std::size_t used = length / 2 + rng.below(length / 2 + 1);
    for (std::size_t t = 0; t < length; ++t) {
      b.ids.push_back(t == 0 ? Vocab::kCls : t < used ? 3 + static_cast<int>(rng.below(vocab - 3)) : Vocab::kPad);
      b.mask.push_back(t < used);
    }
  }
  return b;
}

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random({n, n}, rng), b = random({n, n}, rng);
  for (auto _ : state) {
    Graph g(false);
    benchmark::DoNotOptimize(ops::matmul(g, a, b));
  }
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * 2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

static void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  const Tensor a = random({n, n}, rng, true), b = random({n, n}, rng, true);
  for (auto _ : state) {
    Graph g;
    g.backward(ops::sum(g, ops::matmul(g, a, b)));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

static void BM_EncoderForward(benchmark::State& state) {
  const auto cfg = EncoderConfig::preset(state.range(0) == 0 ? "tiny" : "small", 500);
  const auto params = init_params(cfg, 1);
  Rng rng(3);
  const auto batch = random_batch(16, 24, 500, rng);
  for (auto _ : state) {
    Graph g(false);
    benchmark::DoNotOptimize(encode(g, params, cfg, batch).cls);
  }
}
BENCHMARK(BM_EncoderForward)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

// Forward, backward and Adam update on a joint source+target batch.
static void BM_TrainingStep(benchmark::State& state) {
  const auto cfg = EncoderConfig::preset(state.range(0) == 0 ? "tiny" : "small", 500);
  const auto params = init_params(cfg, 1);
  const auto heads = init_heads(cfg.d_model, 8, 9, 1);
  auto named = params.named();
  for (const auto& h : heads.named()) named.push_back(h);
  Adam adam(named);
  Rng rng(4);
  const auto batch = random_batch(32, 24, 500, rng);
  TaskTargets targets;
  for (int i = 0; i < 16; ++i) targets.intents.push_back(static_cast<int>(rng.below(8)));
  std::vector<int> slots(16 * 24, ops::kIgnoreIndex);
  for (std::size_t i = 0; i < slots.size(); ++i)
    if (i % 24 != 0 && batch.mask[i]) slots[i] = static_cast<int>(rng.below(9));
  targets.slots = slots;
  for (auto _ : state) {
    Graph g;
    const auto enc = encode(g, params, cfg, batch);
    const auto src_cls = ops::slice_rows(g, enc.cls, 0, 16);
    const SequenceEncoding src{src_cls, ops::slice_rows(g, enc.tokens, 0, 16)};
    const auto task = task_loss(g, src, heads, targets);
    const auto align = xero_align_loss(g, src_cls, ops::slice_rows(g, enc.cls, 16, 32));
    g.backward(total_loss(g, task.task, align, 1.0));
    adam.step(1e-4);
  }
}
BENCHMARK(BM_TrainingStep)->Arg(0)->Arg(1)->Unit(benchmark::kMillisecond);

static void BM_SpanF1(benchmark::State& state) {
  static const std::vector<std::string> pool{"O", "O", "O", "B-TIME", "I-TIME", "B-CITY", "I-CITY"};
  Rng rng(5);
  std::vector<std::vector<std::string>> gold, pred;
  for (int i = 0; i < state.range(0); ++i) {
    const std::size_t n = 4 + rng.below(12);
    std::vector<std::string> g(n), p(n);
    for (auto& t : g) t = pool[rng.below(pool.size())];
    for (auto& t : p) t = pool[rng.below(pool.size())];
    gold.push_back(std::move(g));
    pred.push_back(std::move(p));
  }
  for (auto _ : state) benchmark::DoNotOptimize(span_f1(gold, pred));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SpanF1)->Arg(200)->Arg(2000);
BENCHMARK_MAIN();
