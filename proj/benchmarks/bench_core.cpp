#include <benchmark/benchmark.h>

#include "emn/cells.hpp"
#include "emn/memory.hpp"
#include "emn/pipeline.hpp"
#include "emn/qanet.hpp"

namespace {

void BM_GruStep(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    emn::Rng rng(1);
    const emn::GruParams p = emn::GruParams::random(d, d, rng);
    const emn::Tensor h = rng.uniform_vector(d, -1, 1);
    const emn::Tensor x = rng.uniform_vector(d, -1, 1);
    for (auto _ : state) benchmark::DoNotOptimize(emn::gru_step(p, h, x));
}
BENCHMARK(BM_GruStep)->Arg(8)->Arg(50);

void BM_GruStepBackward(benchmark::State& state) {
    const auto d = static_cast<std::size_t>(state.range(0));
    emn::Rng rng(1);
    const emn::GruParams p = emn::GruParams::random(d, d, rng);
    const emn::Tensor h = rng.uniform_vector(d, -1, 1);
    const emn::Tensor x = rng.uniform_vector(d, -1, 1);
    for (auto _ : state) {
        emn::Tape t;
        emn::GruVars g = emn::GruVars::bind(t, p);
        emn::Var out = emn::gru_step(t, g, t.constant(h), t.constant(x));
        t.backward(t.sum(out));
        benchmark::DoNotOptimize(t.gradient_of(p.w_z));
    }
}
BENCHMARK(BM_GruStepBackward)->Arg(8)->Arg(50);

void BM_Encode(benchmark::State& state) {
    emn::Rng rng(2);
    const emn::LstmParams p = emn::LstmParams::random(40, 50, 50, rng);
    const std::vector<emn::WordId> sentence{5, 9, 12, 7, 30, 3};
    for (auto _ : state) benchmark::DoNotOptimize(emn::encode(p, sentence));
}
BENCHMARK(BM_Encode);

void BM_Generalize(benchmark::State& state) {
    emn::Rng rng(3);
    const emn::F2Params f2 = emn::F2Params::random(50, 50, rng);
    const emn::Tensor target = rng.uniform_vector(50, -0.5, 0.5);
    const emn::EmbeddingTable table(50);
    for (auto _ : state) {
        emn::MemoryPool pool("bench");
        emn::init_slot(pool, "mary", table, 50, 1);
        emn::init_slot(pool, "kitchen", table, 50, 1);
        benchmark::DoNotOptimize(emn::generalize(pool, {"mary", "kitchen"}, target, f2, 5, 0.05));
    }
}
BENCHMARK(BM_Generalize);

void BM_OutputFeature(benchmark::State& state) {
    const auto n = static_cast<std::size_t>(state.range(0));
    emn::Rng rng(4);
    const emn::RetrievalParams p = emn::RetrievalParams::random(50, 50, rng);
    emn::MemoryPool pool("bench");
    for (std::size_t k = 0; k < n; ++k) pool.insert({"e" + std::to_string(k), rng.uniform_vector(50, -0.1, 0.1), k});
    const emn::Tensor q = rng.uniform_vector(50, -0.5, 0.5);
    for (auto _ : state) benchmark::DoNotOptimize(emn::output_feature(pool, q, p, 3, 1e-3));
}
BENCHMARK(BM_OutputFeature)->Arg(4)->Arg(16);

void BM_CheckpointText(benchmark::State& state) {
    emn::Rng rng(5);
    emn::Vocabulary vocab;
    for (int k = 0; k < 30; ++k) vocab.add("w" + std::to_string(k));
    const emn::Model m = emn::Model::create(emn::TrainConfig{}, vocab, rng);
    for (auto _ : state) benchmark::DoNotOptimize(emn::checkpoint_text(m));
}
BENCHMARK(BM_CheckpointText);

}  // namespace

BENCHMARK_MAIN();
