#include <benchmark/benchmark.h>

#include "hieratt/model.hpp"
#include "hieratt/ops.hpp"
#include "hieratt/trainer.hpp"

using namespace hieratt;

namespace {

struct Fixture {
  std::unique_ptr<Captioner> model;
  Tensor fm0;
  std::vector<int> tokens;

  explicit Fixture(std::size_t T) {
    const auto scenes = generate_scenes(7, 64);
    model = std::make_unique<Captioner>(CaptionerConfig{}, dataset_vocab(scenes), 3);
    model->decoder().set_max_length(T);
    Tape tape(false);
    fm0 = model->encode(tape, scenes[0].image).value();
    SplitMix64 rng(11);
    tokens.push_back(kStartId);
    while (tokens.size() < T) tokens.push_back(static_cast<int>(1 + rng.below(model->vocab().size() - 1)));
  }
};

void BM_TeacherForced(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    Tape tape(false);
    Var logits = f.model->decoder().forward(tape, tape.constant(f.fm0), f.tokens, false);
    benchmark::DoNotOptimize(logits.value().data().data());
  }
}

void BM_Sequential(benchmark::State& state) {
  Fixture f(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) {
    DecodeCache cache = f.model->decoder().start(f.fm0);
    for (int t : f.tokens) benchmark::DoNotOptimize(f.model->decoder().step(cache, t).data().data());
  }
}

void BM_TrainStep(benchmark::State& state) {
  const auto scenes = generate_scenes(7, 1);
  Captioner model(CaptionerConfig{}, dataset_vocab(scenes), 3);
  const auto tokens = tokenize_caption(scenes[0].caption, model.vocab());
  const std::span<const int> all(tokens);
  for (auto _ : state) {
    Tape tape(true, 1);
    Var fm0 = model.encode(tape, scenes[0].image);
    Var ce = cross_entropy(model.decoder().forward(tape, fm0, all.first(all.size() - 1), true), all.subspan(1), 0);
    tape.backward(ce);
    benchmark::DoNotOptimize(ce.value().item());
  }
}

}  // namespace

BENCHMARK(BM_TeacherForced)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_Sequential)->Arg(8)->Arg(16)->Arg(32)->Unit(benchmark::kMicrosecond);
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMicrosecond);

BENCHMARK_MAIN();
