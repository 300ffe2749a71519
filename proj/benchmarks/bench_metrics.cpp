#include <benchmark/benchmark.h>

#include <string>
#include <vector>

#include "exsearch/metrics.hpp"

using namespace exsearch;

static void BM_TokenF1(benchmark::State& state) {
    const std::vector<std::string> golds = {"Lisa Marie Presley", "The Lisa Marie"};
    for (auto _ : state) benchmark::DoNotOptimize(token_f1("she was Lisa Marie Presley, the singer", golds));
}
BENCHMARK(BM_TokenF1);

static void BM_Accuracy(benchmark::State& state) {
    const std::vector<std::string> golds = {"four times"};
    for (auto _ : state) benchmark::DoNotOptimize(accuracy("She has been married four times so far.", golds));
}
BENCHMARK(BM_Accuracy);

BENCHMARK_MAIN();
