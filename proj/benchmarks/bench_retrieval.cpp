#include <benchmark/benchmark.h>

#include "exsearch/retrieval.hpp"
#include "exsearch/synthetic_world.hpp"

using namespace exsearch;

namespace {

std::vector<Passage> world_corpus(int entities) {
    return render_corpus(generate_world(entities, 8, 2, 0.8, 7));
}

} // namespace

static void BM_BuildIndex(benchmark::State& state) {
    auto corpus = world_corpus(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(build_index(corpus));
    state.SetItemsProcessed(state.iterations() * static_cast<long>(corpus.size()));
}
BENCHMARK(BM_BuildIndex)->Arg(1000)->Arg(10000);

static void BM_Search(benchmark::State& state) {
    auto corpus = world_corpus(static_cast<int>(state.range(0)));
    auto index = build_index(corpus);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& p = corpus[i++ % corpus.size()];
        benchmark::DoNotOptimize(search(index, p.text, 5));
    }
}
BENCHMARK(BM_Search)->Arg(1000)->Arg(10000);

BENCHMARK_MAIN();
