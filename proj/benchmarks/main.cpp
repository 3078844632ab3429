#include <benchmark/benchmark.h>

// Built here because the packaged benchmark_main archive carries LTO bytecode
// from a different compiler release.
BENCHMARK_MAIN();
