// Runs the ten acceptance criteria and prints one PASS/FAIL line per criterion.
// Exit status is nonzero when any criterion fails. An optional argument names
// a file that receives a copy of the lines.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "hieratt/cli.hpp"
#include "hieratt/grad_check.hpp"
#include "hieratt/image_io.hpp"
#include "hieratt/interpretability.hpp"
#include "hieratt/metrics.hpp"
#include "hieratt/region_word.hpp"
#include "hieratt/trainer.hpp"
#include "ie_oracle.hpp"
#include "laptop_example.hpp"
#include "metric_oracles.hpp"
#include "primitive_cases.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;
using namespace hieratt;
using hieratt::testing::random_tensor;

namespace {

// Tolerances and limits.
constexpr double kGradTol = 1e-4;
constexpr double kGradEps = 1e-5;
constexpr std::size_t kReceptiveField = 13;
constexpr double kCacheTol = 1e-6;
constexpr double kRowSumTol = 1e-6;
constexpr double kUniformTol = 5e-4;  // 1/9 against the printed 0.111
constexpr double kIeOracleTol = 1e-12;
constexpr double kMetricOracleTol = 1e-9;
constexpr double kOverfitTarget = 0.9;
constexpr std::size_t kOverfitMaxEpochs = 200;
constexpr double kBleuShiftTol = 0.05;
constexpr double kMinSpeedup = 1.0;
constexpr double kMinHeldoutBleu1 = 0.6;
constexpr double kOneMinute = 60.0, kFiveMinutes = 300.0, kPipelineLimit = 45.0 * 60.0;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// ---------------------------------------------------------------------------

DecoderConfig probe_decoder() {
  DecoderConfig cfg;
  cfg.vocab_size = 20;
  cfg.embed_dim = 8;
  cfg.visual_channels = 6;
  cfg.grid_cells = 4;
  cfg.attention_dim = 4;
  cfg.gate_hidden = 8;
  cfg.max_length = 40;
  cfg.dropout = 0.0;
  return cfg;
}

Tensor logits(const HierAttDecoder& dec, const Tensor& fm, const std::vector<int>& tokens) {
  Tape tape(false);
  return dec.forward(tape, tape.constant(fm), tokens, false).value();
}

std::vector<int> random_tokens(SplitMix64& rng, std::size_t n, std::size_t vocab) {
  std::vector<int> t{kStartId};
  while (t.size() < n) t.push_back(static_cast<int>(1 + rng.below(vocab - 1)));
  return t;
}

Outcome gradient_suite() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  std::string worst_name;
  for (const auto& c : hieratt::testing::primitive_cases()) {
    std::vector<Tensor> inputs;
    for (std::size_t i = 0; i < c.shapes.size(); ++i) inputs.push_back(random_tensor(c.shapes[i], 100 + i));
    const double e = grad_check(c.op, inputs, kGradEps);
    if (e > worst) {
      worst = e;
      worst_name = c.name;
    }
  }
  DecoderConfig cfg = probe_decoder();
  cfg.layers = 2;
  cfg.vocab_size = 7;
  cfg.embed_dim = 4;
  cfg.visual_channels = 3;
  cfg.attention_dim = 3;
  cfg.gate_hidden = 4;
  ParamStore store;
  SplitMix64 rng(4);
  HierAttDecoder dec(store, "dec", cfg, rng);
  const Tensor fm = random_tensor({3, 4}, 6);
  const std::vector<int> tokens{1, 4, 6, 5}, targets{4, 6, 5, 2};
  const double dec_err = grad_check_params(
      store,
      [&](Tape& tape) { return cross_entropy(dec.forward(tape, tape.constant(fm), tokens, true), targets, kPadId); },
      kGradEps);
  const double secs = seconds_since(t0);
  const std::size_t n = hieratt::testing::primitive_cases().size();
  return {worst <= kGradTol && dec_err <= kGradTol && secs < kOneMinute,
          std::to_string(n) + " primitives, worst " + fmt("%.2e", worst) + " (" + worst_name +
              "); 2-layer decoder " + fmt("%.2e", dec_err) + "; " + fmt("%.1f s", secs)};
}

Outcome causality() {
  const auto t0 = Clock::now();
  const DecoderConfig cfg = probe_decoder();
  ParamStore store;
  SplitMix64 init(11);
  HierAttDecoder dec(store, "dec", cfg, init);
  SplitMix64 rng(12);
  std::size_t leaks = 0;
  std::set<std::size_t> horizons;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t T = 20 + rng.below(11);
    const Tensor fm = random_tensor({cfg.visual_channels, cfg.grid_cells}, 500 + trial);
    const auto tokens = random_tokens(rng, T, cfg.vocab_size);
    const std::size_t pos = 1 + rng.below(T - kReceptiveField - 1);
    auto mutated = tokens;
    mutated[pos] = static_cast<int>(1 + (static_cast<std::size_t>(tokens[pos]) % (cfg.vocab_size - 1)));
    const Tensor a = logits(dec, fm, tokens), b = logits(dec, fm, mutated);
    std::size_t last_changed = 0;
    bool any = false;
    for (std::size_t t = 0; t < T; ++t) {
      bool changed = false;
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) changed |= a.at(t, v) != b.at(t, v);
      if (changed && t < pos) ++leaks;
      if (changed) {
        last_changed = t;
        any = true;
      }
    }
    horizons.insert(any ? last_changed - pos + 1 : 0);
  }
  const double secs = seconds_since(t0);
  const bool exact = horizons.size() == 1 && *horizons.begin() == kReceptiveField;
  std::string hs;
  for (auto h : horizons) hs += (hs.empty() ? "" : ",") + std::to_string(h);
  return {leaks == 0 && exact && secs < kOneMinute,
          "100 prefixes, " + std::to_string(leaks) + " past-logit changes, horizon {" + hs + "} (expected " +
              std::to_string(kReceptiveField) + "); " + fmt("%.1f s", secs)};
}

Outcome cache_parity() {
  const auto t0 = Clock::now();
  double worst = 0.0;
  for (std::uint64_t m = 0; m < 20; ++m) {
    const DecoderConfig cfg = probe_decoder();
    ParamStore store;
    SplitMix64 init(1000 + m);
    HierAttDecoder dec(store, "dec", cfg, init);
    SplitMix64 rng(2000 + m);
    const Tensor fm = random_tensor({cfg.visual_channels, cfg.grid_cells}, 3000 + m);
    const auto tokens = random_tokens(rng, 32, cfg.vocab_size);
    const Tensor full = logits(dec, fm, tokens);
    DecodeCache cache = dec.start(fm);
    for (std::size_t t = 0; t < 32; ++t) {
      const Tensor step = dec.step(cache, tokens[t]);
      for (std::size_t v = 0; v < cfg.vocab_size; ++v) worst = std::max(worst, std::abs(step[v] - full.at(t, v)));
    }
  }
  const double secs = seconds_since(t0);
  return {worst <= kCacheTol && secs < kOneMinute,
          "20 models x 32 steps, max |diff| " + fmt("%.2e", worst) + "; " + fmt("%.1f s", secs)};
}

Outcome relevance_structure() {
  RwaConfig cfg;
  cfg.vocab_size = 12;
  RegionWordAttention rwa(cfg, 9);
  double worst_row = 0.0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    Tape tape(false);
    const std::vector<int> ids{4, 5, 6, 7, 8, 9, 10, 11, 4};
    const Tensor m =
        rwa.relevance(tape, tape.constant(random_tensor({3, cfg.encoder.region_dim}, s, -3, 3)), rwa.encode_words(tape, ids))
            .value();
    for (std::size_t i = 0; i < 3; ++i) {
      double row = 0.0;
      for (std::size_t j = 0; j < 9; ++j) row += m.at(i, j);
      worst_row = std::max(worst_row, std::abs(row - 1.0));
    }
  }
  rwa.v().value.fill(0.0);
  Tape tape(false);
  const std::vector<int> ids{4, 5, 6, 7, 8, 9, 10, 11, 4};
  const Tensor uniform =
      rwa.relevance(tape, tape.constant(random_tensor({3, cfg.encoder.region_dim}, 99)), rwa.encode_words(tape, ids)).value();
  double worst_uniform = 0.0;
  for (double p : uniform.data()) worst_uniform = std::max(worst_uniform, std::abs(p - 0.111));

  const PairSelection sel = select_pairs(hieratt::testing::laptop_matrix(), 2.0);
  const auto words = hieratt::testing::laptop_words();
  std::string got;
  for (const auto& p : sel.pairs) got += "(r" + std::to_string(p.region + 1) + ",\"" + words[p.word] + "\")";
  const bool selection_ok = got == "(r1,\"woman\")(r2,\"sitting\")";
  return {worst_row <= kRowSumTol && worst_uniform <= kUniformTol && selection_ok,
          "row-sum err " + fmt("%.1e", worst_row) + ", zero-scoring row max |p-0.111| " + fmt("%.1e", worst_uniform) +
              ", selection " + got};
}

Outcome ie_oracle() {
  SplitMix64 rng(5);
  double worst = 0.0;
  std::size_t checks = 0;
  for (int t = 0; t < 1000; ++t) {
    const std::size_t n = 1 + rng.below(5), k = 1 + rng.below(5);
    Tensor raw(Shape{n, k});
    for (double& v : raw.data()) v = rng.uniform(-3.0, 3.0);
    Tape tape(false);
    const Tensor m = softmax(tape.constant(raw)).value();
    std::vector<Box> boxes;
    for (std::size_t i = 0; i < n; ++i) boxes.push_back(Box{0, 0, rng.between(4, 30), rng.between(4, 30)});
    const RegionPrior prior = t % 2 ? RegionPrior::area_proportional(boxes) : RegionPrior::uniform(n);
    const double c = rng.uniform(0.2, 2.5);
    for (PosteriorMode mode : {PosteriorMode::Verbatim, PosteriorMode::Normalized})
      for (Reduction red : {Reduction::Sum, Reduction::Mean})
        for (PairScope scope : {PairScope::Selected, PairScope::All}) {
          const PairSelection sel = scope == PairScope::All ? all_pairs(m) : select_pairs(m, c);
          const double lib = ie_loss(m, sel, prior, mode, red);
          Tape t2(false);
          const double taped = ie_loss(t2, t2.constant(m), prior, c, mode, red, scope).value().item();
          const double oracle = hieratt::testing::oracle_ie(m, prior.p, c, mode, red, scope);
          worst = std::max({worst, std::abs(lib - oracle), std::abs(taped - oracle)});
          checks += 2;
        }
  }
  return {worst <= kIeOracleTol, std::to_string(checks) + " comparisons on 1000 matrices, max |diff| " +
                                     fmt("%.1e", worst)};
}

Outcome overfit() {
  const auto t0 = Clock::now();
  const auto data = generate_scenes(1000, 8);
  TrainConfig cfg;
  CaptionRun run = start_caption_run(data, cfg);
  double rate = 0.0;
  std::size_t epochs = 0;
  while (epochs < kOverfitMaxEpochs) {
    train_caption_phase1(run, data, cfg, 10);
    epochs += 10;
    std::size_t hit = 0;
    for (const auto& s : data) hit += run.model->caption(s.image) == s.caption;
    rate = static_cast<double>(hit) / static_cast<double>(data.size());
    if (rate >= kOverfitTarget) break;
  }
  const double secs = seconds_since(t0);
  return {rate >= kOverfitTarget && secs < kFiveMinutes,
          fmt("%.0f%%", 100 * rate) + " exact after " + std::to_string(epochs) + " epochs; " + fmt("%.1f s", secs)};
}

// --- end-to-end pipeline shared by criteria 7 and 10 -----------------------

struct Pipeline {
  bool ok = false;
  std::string error;
  double seconds = 0.0;
  double ie_before = 0.0, ie_after = 0.0;
  MetricReport phase1, phase2;
  bool report_valid = false;
  std::string caption;
  std::size_t svg_pairs = 0;
  bool svg_matches = false;
};

struct CliResult {
  int code;
  std::string out, err;
};

CliResult cli(std::vector<std::string> args) {
  args.insert(args.begin(), "hieratt");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  const auto b = read_file(p.string());
  return std::string(b.begin(), b.end());
}

const Pipeline& pipeline() {
  static std::optional<Pipeline> cached;
  if (cached) return *cached;
  Pipeline p;
  const fs::path dir = fs::temp_directory_path() / "hieratt_acceptance";
  fs::remove_all(dir);
  const std::string out = dir.string();
  const auto t0 = Clock::now();
  auto step = [&](std::vector<std::string> args) {
    const CliResult r = cli(args);
    if (r.code != 0) throw std::runtime_error(args[0] + " failed: " + r.err);
    std::fprintf(stderr, "  %s done at %.0f s\n", args[0].c_str(), seconds_since(t0));
    return r;
  };
  try {
    const std::string train = out + "/train.jsonl", held = out + "/heldout.jsonl";
    step({"gen-data", "--out", out, "--count", "2000", "--heldout", "200"});
    step({"train-rwa", "--data", train, "--out", out});
    step({"train", "--data", train, "--out", out});
    const std::string p1 = out + "/phase1";
    step({"eval", "--checkpoint", out + "/captioner.hck", "--data", held, "--out", p1});
    p.phase1 = MetricReport::from_json(nlohmann::json::parse(slurp(p1 + "/metrics.json")));
    step({"retrain-ie", "--data", train, "--checkpoint", out + "/captioner.hck", "--rwa", out + "/rwa.hck", "--out",
          out});
    const auto summary = nlohmann::json::parse(slurp(out + "/ie_summary.json"));
    p.ie_before = summary.at("mean_ie_before");
    p.ie_after = summary.at("mean_ie_after");
    step({"eval", "--checkpoint", out + "/captioner_ie.hck", "--data", held, "--out", out});
    const auto metrics = nlohmann::json::parse(slurp(out + "/metrics.json"));
    p.phase2 = MetricReport::from_json(metrics);
    p.report_valid = metrics.size() == 7 && p.phase2.count == 200;
    for (const char* k : {"bleu1", "bleu2", "bleu3", "bleu4", "rouge_l", "cider"}) {
      const double v = metrics.at(k);
      p.report_valid &= std::isfinite(v) && v >= 0.0;
    }
    step({"caption", "--checkpoint", out + "/captioner_ie.hck", "--data", held, "--index", "0"});
    const CliResult ex = step({"explain", "--checkpoint", out + "/captioner_ie.hck", "--rwa", out + "/rwa.hck",
                               "--data", held, "--index", "0", "--out", out});
    const auto expl = nlohmann::json::parse(slurp(out + "/explanation.json"));
    p.caption = expl.at("caption");
    const auto rows = expl.at("relevance").get<std::vector<std::vector<double>>>();
    Tensor m(Shape{rows.size(), rows.front().size()});
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
    std::set<std::pair<std::size_t, std::size_t>> expected, drawn;
    for (const auto& sp : select_pairs(m, expl.at("factor")).pairs) expected.insert({sp.region, sp.word});
    const std::string svg = slurp(out + "/explanation.svg");
    const std::regex rect(R"re(<rect class="pair" data-region="(\d+)" data-word="(\d+)")re");
    for (auto it = std::sregex_iterator(svg.begin(), svg.end(), rect); it != std::sregex_iterator(); ++it) {
      drawn.insert({std::stoul((*it)[1]), std::stoul((*it)[2])});
      ++p.svg_pairs;
    }
    p.svg_matches = drawn == expected && p.svg_pairs == expected.size();
    p.ok = true;
  } catch (const std::exception& e) {
    p.error = e.what();
  }
  p.seconds = seconds_since(t0);
  cached = p;
  return *cached;
}

Outcome phase2_effect() {
  // Bit-identity of a zero-weight retrain against plain continuation, on a small set.
  const auto data = generate_scenes(7000, 24);
  TrainConfig cfg;
  cfg.rwa_epochs = 1;
  const RwaRun rwa = train_rwa(data, cfg);
  cfg.lambda_ie = 0.0;
  CaptionRun a = start_caption_run(data, cfg), b = start_caption_run(data, cfg);
  train_caption_phase1(a, data, cfg, 1);
  train_caption_phase1(b, data, cfg, 1);
  train_caption_phase1(a, data, cfg, 1);
  train_caption_phase2(b, *rwa.rwa, rwa.vocab, data, cfg, 1);
  bool identical = a.curve.rows.back().ce == b.curve.rows.back().ce;
  auto pa = a.model->params().begin();
  for (const auto& q : b.model->params()) identical &= (*pa++)->value == q->value;

  const Pipeline& p = pipeline();
  if (!p.ok) return {false, "pipeline failed: " + p.error};
  const double shift = p.phase2.bleu1 - p.phase1.bleu1;
  const bool decreased = p.ie_after < p.ie_before;
  return {decreased && identical && std::abs(shift) <= kBleuShiftTol,
          "mean IE " + fmt("%.4f", p.ie_before) + " -> " + fmt("%.4f", p.ie_after) + "; lambda=0 " +
              (identical ? "bit-identical" : "DIFFERS") + "; held-out BLEU@1 " + fmt("%.3f", p.phase1.bleu1) + " -> " +
              fmt("%.3f", p.phase2.bleu1) + " (shift " + fmt("%+.3f", shift) + "), CIDEr " + fmt("%.3f", p.phase1.cider) +
              " -> " + fmt("%.3f", p.phase2.cider)};
}

Outcome metric_oracles() {
  std::mt19937_64 rng(31);
  static const Sentence pool{"a", "the", "cat", "dog", "sat", "on", "mat", "red", "big"};
  auto sentence = [&] {
    std::uniform_int_distribution<std::size_t> len(1, 12), pick(0, pool.size() - 1);
    Sentence s(len(rng));
    for (auto& w : s) w = pool[pick(rng)];
    return s;
  };
  double worst = 0.0;
  for (int t = 0; t < 1000; ++t) {
    const Sentence c = sentence();
    const std::vector<Sentence> refs{sentence()};
    for (int n = 1; n <= 4; ++n)
      worst = std::max(worst, std::abs(bleu(c, refs, n) - hieratt::testing::oracle_bleu(c, refs, n)));
    worst = std::max(worst, std::abs(rouge_l(c, refs[0]) - hieratt::testing::oracle_rouge(c, refs[0])));
  }
  const std::vector<Sentence> self{{"red", "circle", "left", "of", "blue", "square"},
                                   {"green", "triangle", "above", "yellow", "star"},
                                   {"one", "small", "disk", "here"}};
  std::vector<std::vector<Sentence>> refs;
  for (const auto& s : self) refs.push_back({s});
  const MetricReport r = corpus_report(self, refs);
  const bool maxima = std::abs(r.bleu1 - 1) < kMetricOracleTol && std::abs(r.bleu4 - 1) < kMetricOracleTol &&
                      std::abs(r.rouge_l - 1) < kMetricOracleTol && std::abs(r.cider - 10) < kMetricOracleTol;
  return {worst <= kMetricOracleTol && maxima,
          "1000 pairs, max |diff| " + fmt("%.1e", worst) + "; self-eval BLEU@4 " + fmt("%.6f", r.bleu4) + ", ROUGE-L " +
              fmt("%.6f", r.rouge_l) + ", CIDEr " + fmt("%.6f", r.cider)};
}

Outcome benchmark() {
  const TrainConfig cfg;
  const auto scenes = generate_scenes(1, 64);
  Captioner model(cfg.model, dataset_vocab(scenes), 1);
  Tape tape(false);
  const Tensor fm0 = model.encode(tape, scenes[0].image).value();
  const BenchmarkReport r = benchmark_decoder(model.decoder(), fm0, 32, 20, 1);
  return {r.speedup > kMinSpeedup && r.parity_max_diff <= kParityTolerance,
          "T=32: parallel " + fmt("%.3f ms", r.t_parallel_ms) + ", sequential " + fmt("%.3f ms", r.t_sequential_ms) +
              ", speedup " + fmt("%.2fx", r.speedup)};
}

Outcome end_to_end() {
  const Pipeline& p = pipeline();
  if (!p.ok) return {false, "pipeline failed: " + p.error};
  return {p.seconds < kPipelineLimit && p.report_valid && p.phase2.bleu1 >= kMinHeldoutBleu1 && p.svg_matches,
          "2000 scenes in " + fmt("%.1f min", p.seconds / 60.0) + ", held-out BLEU@1 " + fmt("%.3f", p.phase2.bleu1) +
              (p.report_valid ? "" : " (INVALID report)") + "; explanation of \"" + p.caption + "\" draws " +
              std::to_string(p.svg_pairs) + " pairs, " + (p.svg_matches ? "matching" : "NOT matching") +
              " select_pairs"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
      {"gradient suite", gradient_suite},
      {"causality and receptive field", causality},
      {"cache parity", cache_parity},
      {"relevance structure", relevance_structure},
      {"interpretability loss oracle", ie_oracle},
      {"overfit", overfit},
      {"retraining effect", phase2_effect},
      {"metric oracles", metric_oracles},
      {"decoder benchmark", benchmark},
      {"end-to-end pipeline", end_to_end},
  };
  std::ofstream report;
  if (argc > 1) report.open(argv[1]);
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failed += !o.pass;
    char head[96];
    std::snprintf(head, sizeof head, "[%s] %2zu %s: ", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first);
    const std::string line = head + o.detail + "\n";
    std::fputs(line.c_str(), stdout);
    std::fflush(stdout);
    report << line << std::flush;
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  report << failed << " of " << criteria.size() << " criteria failed\n";
  return failed ? 1 : 0;
}
