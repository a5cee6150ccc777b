#include "hieratt/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <set>
#include <sstream>

#include "hieratt/error.hpp"
#include "hieratt/ops.hpp"

namespace hieratt {

namespace {

// Stream tags for derive_seed.
constexpr std::uint64_t kTagShuffle = 1;
constexpr std::uint64_t kTagDropout = 2;
constexpr std::uint64_t kTagRwaShuffle = 3;
constexpr std::uint64_t kTagModelInit = 4;
constexpr std::uint64_t kTagRwaInit = 5;

std::vector<std::size_t> shuffled(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  SplitMix64 rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
  return order;
}

const char* name(PosteriorMode m) { return m == PosteriorMode::Verbatim ? "verbatim" : "normalized"; }
const char* name(PriorMode m) { return m == PriorMode::Uniform ? "uniform" : "area"; }
const char* name(Reduction r) { return r == Reduction::Mean ? "mean" : "sum"; }
const char* name(PairScope s) { return s == PairScope::Selected ? "selected" : "all"; }

template <typename E>
E parse_enum(const nlohmann::json& j, const char* key, E a, E b) {
  const auto s = j.at(key).get<std::string>();
  if (s == name(a)) return a;
  if (s == name(b)) return b;
  throw ParseError(std::string("train config: invalid value \"") + s + "\" for " + key);
}

RegionPrior make_prior(PriorMode mode, const std::vector<Box>& boxes) {
  return mode == PriorMode::Uniform ? RegionPrior::uniform(boxes.size()) : RegionPrior::area_proportional(boxes);
}

std::vector<int> word_ids(const SceneSample& s, const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const auto& w : normalize_words(s.caption)) ids.push_back(vocab.id(w));
  return ids;
}

void check_vocab(std::span<const SceneSample> data, const Vocabulary& vocab) {
  for (const auto& s : data)
    for (const auto& w : normalize_words(s.caption))
      if (!vocab.contains(w)) throw Error("vocabulary mismatch: word \"" + w + "\" is not in the model vocabulary");
}

void check_data(std::span<const SceneSample> data, const char* op) {
  if (data.empty()) throw Error(std::string(op) + ": empty dataset");
}

// Adam moments and step count live in the checkpoint next to the weights.
void add_optimizer_state(Checkpoint& ckpt, const CaptionRun& run) {
  std::size_t k = 0;
  for (const auto& p : run.model->params()) {
    ckpt.add("adam.m." + p->name, run.adam->first_moments()[k]);
    ckpt.add("adam.v." + p->name, run.adam->second_moments()[k]);
    ++k;
  }
}

struct IeTerms {
  Var loss;
  bool any = false;  // false when the caption is empty or nothing was selected
};

// IE loss of the model's own greedy caption for one scene. The caption is
// re-scored teacher-forced; its softmax rows mix the scorer's word embeddings,
// so the loss is differentiable with respect to the captioner.
IeTerms ie_terms(Tape& tape, const Captioner& model, const RegionWordAttention& rwa, const SceneSample& s,
                 const Tensor& region_vectors, const TrainConfig& cfg) {
  Var fm0 = model.encode(tape, s.image);
  const std::vector<int> generated = model.decoder().greedy(fm0.value(), model.config().decoder.max_length);
  if (generated.empty()) return {tape.constant(Tensor::scalar(0.0)), false};
  std::vector<int> inputs{kStartId};
  inputs.insert(inputs.end(), generated.begin(), generated.end() - 1);
  Var probs = softmax(model.decoder().forward(tape, fm0, inputs, false));  // [m, vocab]
  Var soft_words = matmul(probs, tape.constant(rwa.embedding(tape).value()));
  Var words = rwa.encode_word_rows(tape, soft_words);
  Var rel = rwa.relevance(tape, tape.constant(region_vectors), words);
  Var loss = ie_loss(tape, rel, make_prior(cfg.prior, s.boxes()), cfg.selection_factor, cfg.posterior, cfg.reduction,
                     cfg.scope);
  return {loss, tape.requires_grad(loss)};
}

std::vector<Tensor> region_vectors(const RegionWordAttention& rwa, std::span<const SceneSample> data) {
  std::vector<Tensor> out;
  out.reserve(data.size());
  for (const auto& s : data) {
    Tape tape(false);
    out.push_back(rwa.encode_regions(tape, s.image, s.boxes()).value());
  }
  return out;
}

}  // namespace

void TrainConfig::validate() const {
  if (epochs == 0 || ie_epochs == 0 || batch_size == 0 || !(adam.lr > 0.0) || !(rwa_lr > 0.0)) {
    throw Error("train config: epochs, batch size and learning rates must be positive");
  }
  if (!(lambda_ie >= 0.0)) throw Error("train config: lambda_ie must be non-negative");
  if (!(selection_factor > 0.0)) throw Error("train config: selection factor must be positive");
  model.decoder.validate();
}

nlohmann::json TrainConfig::to_json() const {
  return {{"epochs", epochs},
          {"ie_epochs", ie_epochs},
          {"batch_size", batch_size},
          {"lr", adam.lr},
          {"beta1", adam.beta1},
          {"beta2", adam.beta2},
          {"adam_eps", adam.eps},
          {"clip_norm", clip_norm},
          {"seed", seed},
          {"lambda_ie", lambda_ie},
          {"selection_factor", selection_factor},
          {"posterior", name(posterior)},
          {"prior", name(prior)},
          {"reduction", name(reduction)},
          {"pair_scope", name(scope)},
          {"rwa_epochs", rwa_epochs},
          {"rwa_lr", rwa_lr},
          {"train_size", train_size},
          {"heldout_size", heldout_size},
          {"encoder", hieratt::to_json(model.encoder)},
          {"decoder", hieratt::to_json(model.decoder)},
          {"rwa", hieratt::to_json(rwa)}};
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j, TrainConfig c) {
  static const std::set<std::string> known{"epochs",      "ie_epochs",  "batch_size", "lr",          "beta1",      "beta2",
                                           "adam_eps",    "clip_norm",  "seed",        "lambda_ie",  "selection_factor",
                                           "posterior",   "prior",      "reduction",   "pair_scope", "rwa_epochs",
                                           "rwa_lr",      "train_size", "heldout_size", "encoder",   "decoder",
                                           "rwa"};
  if (!j.is_object()) throw ParseError("train config: expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) throw ParseError("train config: unknown key \"" + k + "\"");
  try {
    auto read = [&](const char* key, auto& out) {
      if (j.contains(key)) out = j.at(key).get<std::decay_t<decltype(out)>>();
    };
    read("epochs", c.epochs);
    read("ie_epochs", c.ie_epochs);
    read("batch_size", c.batch_size);
    read("lr", c.adam.lr);
    read("beta1", c.adam.beta1);
    read("beta2", c.adam.beta2);
    read("adam_eps", c.adam.eps);
    read("clip_norm", c.clip_norm);
    read("seed", c.seed);
    read("lambda_ie", c.lambda_ie);
    read("selection_factor", c.selection_factor);
    if (j.contains("posterior")) c.posterior = parse_enum(j, "posterior", PosteriorMode::Verbatim, PosteriorMode::Normalized);
    if (j.contains("prior")) c.prior = parse_enum(j, "prior", PriorMode::Uniform, PriorMode::AreaProportional);
    if (j.contains("reduction")) c.reduction = parse_enum(j, "reduction", Reduction::Mean, Reduction::Sum);
    if (j.contains("pair_scope")) c.scope = parse_enum(j, "pair_scope", PairScope::Selected, PairScope::All);
    read("rwa_epochs", c.rwa_epochs);
    read("rwa_lr", c.rwa_lr);
    read("train_size", c.train_size);
    read("heldout_size", c.heldout_size);
    if (j.contains("encoder")) c.model.encoder = encoder_config_from_json(j["encoder"], c.model.encoder);
    if (j.contains("decoder")) c.model.decoder = decoder_config_from_json(j["decoder"], c.model.decoder);
    if (j.contains("rwa")) c.rwa = rwa_config_from_json(j["rwa"], c.rwa);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("train config: ") + e.what());
  }
  return c;
}

std::string LossCurve::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "epoch,ce_loss,ie_loss,total\n";
  for (const auto& r : rows) out << r.epoch << ',' << r.ce << ',' << r.ie << ',' << r.total << '\n';
  return out.str();
}

LossCurve LossCurve::from_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line != "epoch,ce_loss,ie_loss,total") {
    throw ParseError("loss curve: missing header \"epoch,ce_loss,ie_loss,total\"");
  }
  LossCurve c;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    LossRow r;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream row(line);
    if (!(row >> r.epoch >> c1 >> r.ce >> c2 >> r.ie >> c3 >> r.total) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ParseError("loss curve: malformed row \"" + line + "\"");
    }
    c.rows.push_back(r);
  }
  return c;
}

Vocabulary dataset_vocab(std::span<const SceneSample> data) {
  std::vector<std::string> captions;
  for (const auto& s : data) captions.push_back(s.caption);
  return Vocabulary::build(captions);
}

RwaRun train_rwa(std::span<const SceneSample> data, const TrainConfig& cfg, const EpochHook& hook) {
  check_data(data, "train_rwa");
  cfg.validate();
  RwaRun run;
  run.vocab = dataset_vocab(data);
  RwaConfig rc = cfg.rwa;
  rc.vocab_size = run.vocab.size();
  run.rwa = std::make_unique<RegionWordAttention>(rc, derive_seed(cfg.seed, kTagRwaInit));
  ParamStore& store = run.rwa->params();
  AdamConfig ac = cfg.adam;
  ac.lr = cfg.rwa_lr;
  Adam adam(store, ac);

  // Per-sample boxes and target rows.
  struct Item {
    std::vector<Box> boxes;
    std::vector<int> ids;
    Tensor target;
  };
  std::vector<Item> items;
  for (const auto& s : data) {
    Item it;
    it.ids = word_ids(s, run.vocab);
    const auto words = normalize_words(s.caption);
    it.boxes = s.boxes();
    const auto bg = background_box(s);
    if (bg) it.boxes.push_back(*bg);
    const std::size_t k = words.size();
    it.target = Tensor(Shape{it.boxes.size(), k});
    for (std::size_t i = 0; i < s.regions.size(); ++i) {
      const auto pos = std::find(words.begin(), words.end(), s.regions[i].object);
      if (pos == words.end()) throw Error("train_rwa: object word missing from caption \"" + s.caption + "\"");
      it.target.at(i, static_cast<std::size_t>(pos - words.begin())) = 1.0;
    }
    if (bg)
      for (std::size_t j = 0; j < k; ++j) it.target.at(s.regions.size(), j) = 1.0 / static_cast<double>(k);
    items.push_back(std::move(it));
  }

  for (std::size_t epoch = 0; epoch < cfg.rwa_epochs; ++epoch) {
    const auto order = shuffled(items.size(), derive_seed(cfg.seed, kTagRwaShuffle, epoch));
    double total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      store.zero_grad();
      for (std::size_t q = b; q < end; ++q) {
        const Item& it = items[order[q]];
        const SceneSample& s = data[order[q]];
        Tape tape(true);
        Var r = run.rwa->encode_regions(tape, s.image, it.boxes);
        Var w = run.rwa->encode_words(tape, it.ids);
        Var logp = log_softmax(run.rwa->scores(tape, r, w));
        Var loss = affine(sum(mul(logp, tape.constant(it.target))), -1.0 / static_cast<double>(it.boxes.size()));
        tape.backward(loss);
        tape.accumulate_param_grads(1.0 / static_cast<double>(end - b));
        total += loss.value().item();
      }
      clip_grad_norm(store, cfg.clip_norm);
      adam.step();
    }
    const double mean = total / static_cast<double>(items.size());
    run.curve.rows.push_back({epoch + 1, mean, 0.0, mean});
    if (hook) hook(run.curve.rows.back());
  }
  return run;
}

double rwa_alignment_accuracy(const RegionWordAttention& rwa, const Vocabulary& vocab,
                              std::span<const SceneSample> data) {
  std::size_t hits = 0, total = 0;
  for (const auto& s : data) {
    const auto words = normalize_words(s.caption);
    const auto ids = word_ids(s, vocab);
    const RelevanceMatrix m = rwa.explain(s.image, s.boxes(), ids, words);
    for (std::size_t i = 0; i < s.regions.size(); ++i) {
      std::vector<double> row(m.word_count());
      for (std::size_t j = 0; j < row.size(); ++j) row[j] = m(i, j);
      hits += words[argmax_lowest(row)] == s.regions[i].object;
      ++total;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

CaptionRun start_caption_run(std::span<const SceneSample> data, const TrainConfig& cfg) {
  check_data(data, "train");
  cfg.validate();
  CaptionRun run;
  run.model = std::make_unique<Captioner>(cfg.model, dataset_vocab(data), derive_seed(cfg.seed, kTagModelInit));
  run.adam = std::make_unique<Adam>(run.model->params(), cfg.adam);
  return run;
}

namespace {

// Shared epoch loop of both phases. `rwa` is null in phase 1.
void caption_epochs(CaptionRun& run, std::span<const SceneSample> data, const TrainConfig& cfg, std::size_t epochs,
                    const RegionWordAttention* rwa, const EpochHook& hook) {
  check_data(data, "train");
  cfg.validate();
  check_vocab(data, run.model->vocab());
  Captioner& model = *run.model;
  ParamStore& store = model.params();
  run.adam->set_lr(cfg.adam.lr);

  std::vector<std::vector<int>> tokens;
  for (const auto& s : data) {
    tokens.push_back(tokenize_caption(s.caption, model.vocab()));
    if (tokens.back().size() - 1 > model.config().decoder.max_length) {
      throw Error("train: caption longer than the decoder's max length: \"" + s.caption + "\"");
    }
  }
  std::vector<Tensor> regions;
  if (rwa) regions = region_vectors(*rwa, data);
  const double lambda = rwa ? cfg.lambda_ie : 0.0;

  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t epoch = run.epochs_done;
    const auto order = shuffled(data.size(), derive_seed(cfg.seed, kTagShuffle, epoch));
    double ce_total = 0.0, ie_total = 0.0;
    for (std::size_t b = 0; b < order.size(); b += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), b + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(end - b);
      store.zero_grad();
      for (std::size_t q = b; q < end; ++q) {
        const std::size_t idx = order[q];
        const auto& t = tokens[idx];
        {
          Tape tape(true, derive_seed(cfg.seed, kTagDropout, epoch, idx));
          Var fm0 = model.encode(tape, data[idx].image);
          const std::span<const int> all(t);
          Var ce = cross_entropy(model.decoder().forward(tape, fm0, all.first(t.size() - 1), true),
                                 all.subspan(1), kPadId);
          tape.backward(ce);
          tape.accumulate_param_grads(scale);
          ce_total += ce.value().item();
        }
        if (rwa) {
          // The IE pass runs on its own tape; with lambda = 0 nothing flows back.
          Tape tape(lambda > 0.0);
          IeTerms ie = ie_terms(tape, model, *rwa, data[idx], regions[idx], cfg);
          ie_total += ie.loss.value().item();
          if (lambda > 0.0 && ie.any) {
            tape.backward(ie.loss);
            tape.accumulate_param_grads(lambda * scale);
          }
        }
      }
      clip_grad_norm(store, cfg.clip_norm);
      run.adam->step();
    }
    const double n = static_cast<double>(data.size());
    LossRow row{epoch + 1, ce_total / n, ie_total / n, ce_total / n + lambda * ie_total / n};
    run.curve.rows.push_back(row);
    ++run.epochs_done;
    if (hook) hook(row);
  }
}

}  // namespace

void train_caption_phase1(CaptionRun& run, std::span<const SceneSample> data, const TrainConfig& cfg,
                          std::size_t epochs, const EpochHook& hook) {
  caption_epochs(run, data, cfg, epochs, nullptr, hook);
}

void train_caption_phase2(CaptionRun& run, const RegionWordAttention& rwa, const Vocabulary& rwa_vocab,
                          std::span<const SceneSample> data, const TrainConfig& cfg, std::size_t epochs,
                          const EpochHook& hook) {
  if (!(rwa_vocab == run.model->vocab())) {
    throw Error("retrain: the captioner and region-word checkpoints use different vocabularies");
  }
  caption_epochs(run, data, cfg, epochs, &rwa, hook);
}

double mean_ie(const Captioner& model, const RegionWordAttention& rwa, std::span<const SceneSample> data,
               const TrainConfig& cfg) {
  check_data(data, "mean_ie");
  const auto regions = region_vectors(rwa, data);
  double total = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    Tape tape(false);
    total += ie_terms(tape, model, rwa, data[i], regions[i], cfg).loss.value().item();
  }
  return total / static_cast<double>(data.size());
}

Checkpoint run_checkpoint(const CaptionRun& run) {
  Checkpoint ckpt = captioner_checkpoint(*run.model);
  ckpt.config["training"] = {{"epochs_done", run.epochs_done}, {"adam_steps", run.adam->steps()}};
  add_optimizer_state(ckpt, run);
  return ckpt;
}

CaptionRun run_from_checkpoint(const Checkpoint& ckpt, const TrainConfig& cfg) {
  CaptionRun run;
  run.model = captioner_from_checkpoint(ckpt);
  run.adam = std::make_unique<Adam>(run.model->params(), cfg.adam);
  if (ckpt.config.contains("training")) {
    const auto& t = ckpt.config["training"];
    run.epochs_done = t.at("epochs_done").get<std::size_t>();
    run.adam->set_steps(t.at("adam_steps").get<std::uint64_t>());
    std::size_t k = 0;
    for (const auto& p : run.model->params()) {
      run.adam->first_moments()[k] = to_tensor(ckpt.at("adam.m." + p->name));
      run.adam->second_moments()[k] = to_tensor(ckpt.at("adam.v." + p->name));
      ++k;
    }
  }
  return run;
}

Evaluation evaluate(const Captioner& model, std::span<const SceneSample> data) {
  check_data(data, "evaluate");
  Evaluation ev;
  std::vector<Sentence> candidates;
  std::vector<std::vector<Sentence>> references;
  for (const auto& s : data) {
    ev.captions.push_back(model.caption(s.image));
    candidates.push_back(normalize_words(ev.captions.back()));
    references.push_back({normalize_words(s.caption)});
  }
  ev.report = corpus_report(candidates, references);
  return ev;
}

nlohmann::json BenchmarkReport::to_json() const {
  return {{"T", T},
          {"reps", reps},
          {"t_parallel_ms", t_parallel_ms},
          {"t_sequential_ms", t_sequential_ms},
          {"speedup", speedup},
          {"parity_max_diff", parity_max_diff}};
}

BenchmarkReport benchmark_decoder(HierAttDecoder& decoder, const Tensor& fm0, std::size_t T, std::size_t reps,
                                  std::uint64_t seed) {
  if (T == 0 || reps == 0) throw Error("benchmark: T and reps must be positive");
  if (decoder.config().max_length < T) decoder.set_max_length(T);
  SplitMix64 rng(seed);
  std::vector<int> tokens{kStartId};
  while (tokens.size() < T) tokens.push_back(static_cast<int>(1 + rng.below(decoder.config().vocab_size - 1)));

  auto parallel = [&] {
    Tape tape(false);
    return decoder.forward(tape, tape.constant(fm0), tokens, false).value();
  };
  auto sequential = [&] {
    DecodeCache cache = decoder.start(fm0);
    std::vector<Tensor> out;
    for (int t : tokens) out.push_back(decoder.step(cache, t));
    return out;
  };

  BenchmarkReport r;
  r.T = T;
  r.reps = reps;
  const Tensor full = parallel();
  const auto steps = sequential();
  for (std::size_t t = 0; t < T; ++t)
    for (std::size_t c = 0; c < full.dim(1); ++c)
      r.parity_max_diff = std::max(r.parity_max_diff, std::abs(full.at(t, c) - steps[t][c]));
  if (!(r.parity_max_diff <= kParityTolerance)) {
    throw Error("benchmark: incremental and full-sequence logits differ by " + std::to_string(r.parity_max_diff));
  }

  auto median_ms = [&](auto&& fn) {
    std::vector<double> times;
    for (std::size_t i = 0; i < reps; ++i) {
      const auto t0 = std::chrono::steady_clock::now();
      auto out = fn();
      const auto t1 = std::chrono::steady_clock::now();
      (void)out;
      times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    const std::size_t m = times.size() / 2;
    return times.size() % 2 ? times[m] : 0.5 * (times[m - 1] + times[m]);
  };
  r.t_parallel_ms = median_ms(parallel);
  r.t_sequential_ms = median_ms(sequential);
  r.speedup = r.t_sequential_ms / r.t_parallel_ms;
  return r;
}

DecoderConfig full_scale_decoder() {
  DecoderConfig c;
  c.visual_channels = 2048;
  c.embed_dim = 300;
  c.gate_hidden = 512;
  c.vocab_size = 9489;
  c.attention_dim = 150;
  c.grid_cells = 49;
  return c;
}

}  // namespace hieratt
