#include <benchmark/benchmark.h>

#include "stps/dataio.hpp"
#include "stps/pipeline.hpp"

using namespace stps;

static void BM_Matmul(benchmark::State& state) {
    const std::size_t n = state.range(0);
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> uni(-1.0, 1.0);
    std::vector<double> av(n * n), bv(n * n);
    for (auto& v : av) v = uni(rng);
    for (auto& v : bv) v = uni(rng);
    diff::Var a = diff::Var::constant({n, n}, av);
    diff::Var b = diff::Var::constant({n, n}, bv);
    for (auto _ : state) {
        diff::Var c = diff::matmul(a, b);
        benchmark::DoNotOptimize(c.values().data());
    }
    state.SetItemsProcessed(state.iterations() * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

static void BM_StageForward(benchmark::State& state) {
    data::SyntheticConfig sc;
    sc.n = 12;
    sc.days = 2;
    sc.seed = 7;
    auto ds = data::generate_synthetic(sc);
    auto partition = data::select_locations(ds.table, ds.graph, 4, data::SelectMode::Random, 7);
    auto normalizer = data::fit_normalizer(ds.table);
    model::ModelConfig mc;
    mc.d = static_cast<std::size_t>(state.range(0));
    mc.l = 12;
    mc.l_prime = 24;
    model::StpsModel m(mc, ds.graph, partition, normalizer);
    auto windows = data::make_windows(ds.table, partition, mc.l, mc.l_prime);
    diff::ForwardCtx ctx{};
    std::size_t k = 0;
    for (auto _ : state) {
        auto out = m.forward_chain(windows[k % windows.size()], 3, ctx);
        benchmark::DoNotOptimize(out.s3.values().data());
        ++k;
    }
}
BENCHMARK(BM_StageForward)->Arg(8)->Arg(16);

static void BM_TrainStep(benchmark::State& state) {
    data::SyntheticConfig sc;
    sc.n = 8;
    sc.days = 2;
    sc.seed = 3;
    auto ds = data::generate_synthetic(sc);
    auto partition = data::select_locations(ds.table, ds.graph, 3, data::SelectMode::Random, 3);
    auto normalizer = data::fit_normalizer(ds.table);
    model::ModelConfig mc;
    mc.d = 8;
    mc.l = 4;
    mc.l_prime = 8;
    mc.dropout = 0.0;
    model::StpsModel m(mc, ds.graph, partition, normalizer);
    auto windows = data::make_windows(ds.table, partition, mc.l, mc.l_prime);
    diff::ForwardCtx ctx{};
    std::size_t k = 0;
    for (auto _ : state) {
        auto out = m.forward_chain(windows[k % windows.size()], 3, ctx);
        diff::Var loss = m.mae_loss(out.s3, windows[k % windows.size()].x_Mp_Tp);
        diff::backward(loss);
        for (auto& [name, e] : m.params().entries()) e.value.node()->ensure_grad();
        diff::adamw_step(m.params(), 1e-3, 0.9, 0.999, 1e-8, 1e-3);
        ++k;
    }
}
BENCHMARK(BM_TrainStep);

BENCHMARK_MAIN();
