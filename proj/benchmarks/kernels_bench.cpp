#include <benchmark/benchmark.h>

#include <vector>

#include "maskroute/crc32.hpp"
#include "maskroute/mask_io.hpp"
#include "maskroute/masking.hpp"
#include "maskroute/ops.hpp"
#include "maskroute/rng.hpp"

namespace {

using namespace maskroute;

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-1.0, 1.0);
  return v;
}

void BM_TopkBinarize(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto scores = random_values(n, 1);
  const std::size_t k = n - n / 10;
  for (auto _ : state) benchmark::DoNotOptimize(topk_binarize(scores, k));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_TopkBinarize)->Arg(4096)->Arg(1 << 16)->Arg(1 << 20);

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const Tensor a({n, n}, random_values(n * n, 2));
  const Tensor b({n, n}, random_values(n * n, 3));
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(128)->Arg(256);

std::vector<std::uint8_t> random_bits(std::size_t n) {
  Rng rng(4);
  std::vector<std::uint8_t> bits(n);
  for (auto& b : bits) b = static_cast<std::uint8_t>(rng.below(2));
  return bits;
}

void BM_PackBits(benchmark::State& state) {
  const auto bits = random_bits(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(pack_bits(bits));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_PackBits)->Arg(1 << 16)->Arg(1 << 22);

void BM_Crc32(benchmark::State& state) {
  const auto bytes = random_bits(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(crc32(bytes));
  state.SetBytesProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Crc32)->Arg(1 << 16)->Arg(1 << 22);

void BM_SerializeMasks(benchmark::State& state) {
  MaskSet masks;
  for (int i = 0; i < 8; ++i) {
    LayerMask m;
    m.name = "block" + std::to_string(i / 2) + (i % 2 ? ".ffn.w2" : ".ffn.w1");
    m.bits = random_bits(static_cast<std::size_t>(state.range(0)));
    m.shape = {m.bits.size()};
    masks.layers.push_back(std::move(m));
  }
  for (auto _ : state) benchmark::DoNotOptimize(serialize_masks(masks));
  state.SetBytesProcessed(state.iterations() * 8 * state.range(0));
}
BENCHMARK(BM_SerializeMasks)->Arg(4096)->Arg(1 << 18);

}  // namespace
