#include <benchmark/benchmark.h>

#include "exsearch/retrieval.hpp"
#include "exsearch/synthetic_world.hpp"
#include "exsearch/tabular_policy.hpp"

using namespace exsearch;

static void BM_ExactMarginal(benchmark::State& state) {
    const int hops = static_cast<int>(state.range(0));
    auto world = generate_world(40, 3, hops, 0.8, 3);
    auto index = build_index(render_corpus(world));
    Bm25Retriever retriever(index);
    auto params = TabularPolicyParams::uniform(world.relations, hops, 2);
    auto questions = make_questions(world, 8, 3);
    std::size_t i = 0;
    for (auto _ : state) {
        const auto& ex = questions[i++ % questions.size()];
        benchmark::DoNotOptimize(exact_marginal(params, ex, retriever, ex.gold_answers[0]));
    }
}
BENCHMARK(BM_ExactMarginal)->Arg(1)->Arg(2);

BENCHMARK_MAIN();
