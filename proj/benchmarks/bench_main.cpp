#include <benchmark/benchmark.h>

#include <random>

#include "hecnn/backward.hpp"
#include "hecnn/forward.hpp"
#include "hecnn/model_io.hpp"
#include "hecnn/protocol.hpp"

namespace {

using namespace hecnn;

SlotVector random_slots(std::size_t n, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  SlotVector v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = dist(rng);
  return v;
}

void BM_SimMultiply(benchmark::State& state) {
  const auto slots = static_cast<std::size_t>(state.range(0));
  TeeService tee(128, 4, slots);
  std::mt19937_64 rng(1);
  OpLedger ledger;
  const Ciphertext a = tee.backend().encrypt(random_slots(slots, rng), ledger);
  const Ciphertext b = tee.backend().encrypt(random_slots(slots, rng), ledger);
  for (auto _ : state) benchmark::DoNotOptimize(tee.backend().multiply(a, b, ledger));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimMultiply)->Arg(1024)->Arg(8192);

void BM_SimRotate(benchmark::State& state) {
  const auto slots = static_cast<std::size_t>(state.range(0));
  TeeService tee(128, 4, slots);
  std::mt19937_64 rng(2);
  OpLedger ledger;
  const Ciphertext a = tee.backend().encrypt(random_slots(slots, rng), ledger);
  for (auto _ : state) benchmark::DoNotOptimize(tee.backend().rotate(a, 17, ledger));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_SimRotate)->Arg(1024)->Arg(8192);

// Demo-style model with weights uniform in +-1/sqrt(fan-in).
PlainModel seeded_model(const ModelConfig& config, std::mt19937_64& rng) {
  PlainModel m;
  auto fill = [&](Tensor t, double fan_in) {
    std::uniform_real_distribution<double> dist(-1.0 / std::sqrt(fan_in), 1.0 / std::sqrt(fan_in));
    for (double& x : t.data()) x = dist(rng);
    return t;
  };
  for (const auto& c : config.conv) {
    m.conv.push_back(fill(Tensor({static_cast<std::size_t>(c.filters), static_cast<std::size_t>(c.channels),
                                  static_cast<std::size_t>(c.kernel), static_cast<std::size_t>(c.kernel)}),
                          c.channels * c.kernel * c.kernel));
  }
  for (const auto& f : config.fc) {
    m.fc.push_back(fill(Tensor({static_cast<std::size_t>(f.out), static_cast<std::size_t>(f.in)}), f.in));
  }
  return m;
}

Tensor seeded_batch(const ModelConfig& config, std::mt19937_64& rng) {
  Tensor t({static_cast<std::size_t>(config.n), static_cast<std::size_t>(config.channels_in()),
            static_cast<std::size_t>(config.input_side), static_cast<std::size_t>(config.input_side)});
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  for (double& x : t.data()) x = dist(rng);
  return t;
}

void BM_InferenceSession(benchmark::State& state, const char* bundle, int workers) {
  const ModelConfig config = load_config(std::string(HECNN_DATA_DIR) + "/" + bundle + "/config.json");
  std::mt19937_64 rng(3);
  const PlainModel model = seeded_model(config, rng);
  const Tensor batch = seeded_batch(config, rng);
  SessionOptions options;
  options.workers = workers;
  for (auto _ : state) benchmark::DoNotOptimize(run_session(model, config, batch, std::nullopt, options));
  state.counters["inputs/s"] =
      benchmark::Counter(static_cast<double>(state.iterations() * config.n), benchmark::Counter::kIsRate);
}
BENCHMARK_CAPTURE(BM_InferenceSession, cnn12_serial, "cnn12", 1)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_InferenceSession, cnn12_parallel, "cnn12", 0)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_InferenceSession, desk, "desk", 0)->Unit(benchmark::kMillisecond);

void BM_TrainStepSession(benchmark::State& state) {
  const ModelConfig config = load_config(std::string(HECNN_DATA_DIR) + "/desk/config.json");
  std::mt19937_64 rng(4);
  const PlainModel model = seeded_model(config, rng);
  const Tensor batch = seeded_batch(config, rng);
  Tensor labels({static_cast<std::size_t>(config.n), static_cast<std::size_t>(config.fc.back().out)});
  std::uniform_real_distribution<double> dist(0.0, 1.0);
  for (double& x : labels.data()) x = dist(rng);
  for (auto _ : state) benchmark::DoNotOptimize(run_session(model, config, batch, labels));
}
BENCHMARK(BM_TrainStepSession)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
