// Microbenchmarks for the numeric kernels and the three scoring families.

#include <benchmark/benchmark.h>

#include "ltr/scorers.hpp"

using namespace ltr;

namespace {

template <class Real>
void BM_Gemm(benchmark::State& state) {
  const int n = int(state.range(0));
  RngStream rng(1);
  auto a = Mat<Real>::uniform(n, n, rng.fork(0), Real(-1), Real(1));
  auto b = Mat<Real>::uniform(n, n, rng.fork(1), Real(-1), Real(1));
  Mat<Real> c(n, n);
  for (auto _ : state) {
    gemm(false, false, a, b, c);
    benchmark::DoNotOptimize(c.data.data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * int64_t(n) * n * n);
}

void BM_AttentionForward(benchmark::State& state) {
  const int docs = int(state.range(0));
  AttentionBlockSpec spec;
  spec.model_width = 64;
  spec.n_heads = 2;
  ParamStore<float> params;
  RngStream root(3);
  for_each_attention_param(spec, 136, "attn", [&](const std::string& n, int r, int c) {
    init_param(params, n, r, c, root);
  });
  StatStore<float> stats;
  Mat<float> x = Mat<float>::uniform(docs, 136, RngStream(5), -1.f, 1.f);
  std::vector<std::uint8_t> mask(docs, 1);
  for (auto _ : state) {
    Graph<float> g;
    g.params = &params;
    g.stats = &stats;
    g.build_grads = false;
    NodeId out = attention_stack(g, g.input(x), spec, mask, "attn");
    benchmark::DoNotOptimize(g.tape.value(out).data.data());
  }
}

void bench_scorer(benchmark::State& state, ScorerFamily family) {
  const int docs = int(state.range(0));
  ScorerSpec spec;
  spec.family = family;
  spec.n_features = 136;
  spec.dense.hidden = {64, 32};
  spec.dense.input_batch_norm = true;
  spec.attn.model_width = 64;
  spec.gsf_group_size = 2;
  spec.gsf_mode = GsfMode::exact;
  auto params = init_scorer_params<float>(spec, 7);
  auto stats = init_scorer_stats<float>(spec);
  RankedQuery q;
  q.qid = "b";
  q.features = Mat<double>::uniform(docs, 136, RngStream(9), -1.0, 1.0);
  q.labels.assign(docs, 0);
  for (auto _ : state) {
    auto scores = score_single_list(spec, params, stats, q);
    benchmark::DoNotOptimize(scores.data());
  }
}

void BM_ScoreUnivariate(benchmark::State& state) {
  bench_scorer(state, ScorerFamily::univariate);
}
void BM_ScoreAttention(benchmark::State& state) {
  bench_scorer(state, ScorerFamily::attn_din);
}
void BM_ScoreGsfExact(benchmark::State& state) { bench_scorer(state, ScorerFamily::gsf); }

}  // namespace

BENCHMARK(BM_Gemm<float>)->Arg(64)->Arg(256);
BENCHMARK(BM_Gemm<double>)->Arg(64)->Arg(256);
BENCHMARK(BM_AttentionForward)->Arg(50)->Arg(200);
BENCHMARK(BM_ScoreUnivariate)->Arg(50)->Arg(200);
BENCHMARK(BM_ScoreAttention)->Arg(50)->Arg(200);
BENCHMARK(BM_ScoreGsfExact)->Arg(50)->Arg(100);

BENCHMARK_MAIN();
