#include "hieratt/cli.hpp"

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include "hieratt/error.hpp"
#include "hieratt/image_io.hpp"
#include "hieratt/trainer.hpp"
#include "hieratt/visualizer.hpp"

namespace fs = std::filesystem;

namespace hieratt {

namespace {

// Held-out scenes start this far above the training seeds.
constexpr std::uint64_t kHeldoutSeedOffset = 1ull << 31;

std::uint64_t first_train_seed(std::uint64_t seed) { return seed << 32; }

// Files produced by a command, written together once it has succeeded.
class Outputs {
 public:
  explicit Outputs(std::string dir) : dir_(std::move(dir)) {}

  void add(const std::string& name, std::string bytes) { files_[name] = std::move(bytes); }
  void add(const std::string& name, const std::vector<std::uint8_t>& bytes) {
    files_[name] = std::string(bytes.begin(), bytes.end());
  }
  std::string path(const std::string& name) const { return (fs::path(dir_) / name).string(); }

  void commit() const {
    if (files_.empty()) return;
    fs::create_directories(dir_);
    for (const auto& [name, bytes] : files_) {
      const fs::path tmp = fs::path(dir_) / (name + ".partial");
      write_file(tmp.string(), bytes);
      fs::rename(tmp, fs::path(dir_) / name);
    }
  }

 private:
  std::string dir_;
  std::map<std::string, std::string> files_;
};

struct Common {
  std::uint64_t seed = 1;
  bool seed_set = false;
  std::string config;
  std::string out = ".";
  std::size_t epochs = 0;
  double lambda_ie = -1.0;
  double threshold_factor = -1.0;
};

TrainConfig load_config(const Common& c) {
  TrainConfig cfg;
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw Error("cannot open config " + c.config);
    const nlohmann::json j = nlohmann::json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError("config " + c.config + ": malformed JSON");
    cfg = TrainConfig::from_json(j);
  }
  if (c.seed_set) cfg.seed = c.seed;
  if (c.lambda_ie >= 0.0) cfg.lambda_ie = c.lambda_ie;
  if (c.threshold_factor > 0.0) cfg.selection_factor = c.threshold_factor;
  cfg.validate();
  return cfg;
}

std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

std::vector<Box> parse_boxes(const std::string& text) {
  std::vector<Box> boxes;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ';')) {
    if (item.empty()) continue;
    Box b;
    char c1 = 0, c2 = 0, c3 = 0;
    std::istringstream f(item);
    if (!(f >> b.x >> c1 >> b.y >> c2 >> b.w >> c3 >> b.h) || c1 != ',' || c2 != ',' || c3 != ',') {
      throw ParseError("boxes: expected \"x,y,w,h;...\", got \"" + item + "\"");
    }
    boxes.push_back(b);
  }
  if (boxes.empty()) throw ParseError("boxes: none given");
  return boxes;
}

nlohmann::json relevance_json(const RelevanceMatrix& m, const PairSelection& sel) {
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < m.regions(); ++i) {
    std::vector<double> r;
    for (std::size_t j = 0; j < m.word_count(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  nlohmann::json boxes = nlohmann::json::array();
  for (const Box& b : m.boxes) boxes.push_back({b.x, b.y, b.w, b.h});
  nlohmann::json pairs = nlohmann::json::array();
  for (const auto& p : sel.pairs) {
    pairs.push_back({{"region", p.region}, {"word", p.word}, {"token", m.words[p.word]}, {"relevance", p.relevance}});
  }
  return {{"words", m.words},       {"boxes", boxes},          {"relevance", rows},
          {"pairs", pairs},         {"factor", sel.factor},    {"threshold", sel.threshold()}};
}

class Progress {
 public:
  explicit Progress(std::ostream& err, std::string tag) : err_(err), tag_(std::move(tag)) {}
  void operator()(const LossRow& r) const {
    err_ << tag_ << " epoch " << r.epoch << " ce " << r.ce << " ie " << r.ie << " total " << r.total << '\n';
  }

 private:
  std::ostream& err_;
  std::string tag_;
};

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Explainable image captioning: causal-convolution captioner with hierarchical attention, "
               "region-word relevance and interpretability-enhanced retraining.",
               "hieratt"};
  app.require_subcommand(1);

  Common c;
  auto add_common = [&](CLI::App* sub, bool training) {
    sub->add_option("--out", c.out, "Output directory");
    sub->add_option("--config", c.config, "JSON config (TrainConfig and model keys); flags override it")
        ->check(CLI::ExistingFile);
    sub->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { c.seed = s; c.seed_set = true; }, "Random seed");
    if (training) sub->add_option("--epochs", c.epochs, "Epochs (defaults come from the config)");
  };

  std::string data, checkpoint, rwa_path, image, boxes;
  std::size_t count = 0, heldout = 0, index = 0, T = 32, reps = 20, ie_sample = 0;
  bool paper_scale = false;
  std::optional<std::size_t> index_opt;

  auto* gen = app.add_subcommand("gen-data", "Generate train.jsonl and heldout.jsonl scene manifests");
  add_common(gen, false);
  gen->add_option("--count", count, "Training scenes (default: config train_size)");
  gen->add_option("--heldout", heldout, "Held-out scenes (default: config heldout_size)");

  auto* train_rwa_cmd = app.add_subcommand("train-rwa", "Train the region-word relevance model");
  add_common(train_rwa_cmd, true);
  train_rwa_cmd->add_option("--data", data, "Training manifest")->required()->check(CLI::ExistingFile);

  auto* train_cmd = app.add_subcommand("train", "Phase-1 caption training (cross-entropy only)");
  add_common(train_cmd, true);
  train_cmd->add_option("--data", data, "Training manifest")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--checkpoint", checkpoint, "Resume from this captioner checkpoint")
      ->check(CLI::ExistingFile);

  auto* retrain = app.add_subcommand("retrain-ie", "Phase-2 retraining with the interpretability loss");
  add_common(retrain, true);
  retrain->add_option("--data", data, "Training manifest")->required()->check(CLI::ExistingFile);
  retrain->add_option("--checkpoint", checkpoint, "Phase-1 captioner checkpoint")->required()->check(CLI::ExistingFile);
  retrain->add_option("--rwa", rwa_path, "Region-word checkpoint")->required()->check(CLI::ExistingFile);
  retrain->add_option("--lambda-ie", c.lambda_ie, "Weight of the IE term")->check(CLI::NonNegativeNumber);
  retrain->add_option("--threshold-factor", c.threshold_factor, "Pair selection factor c (threshold c/k)")
      ->check(CLI::PositiveNumber);
  retrain->add_option("--ie-sample", ie_sample, "Training scenes used for the before/after mean IE (0: all)");

  auto* caption = app.add_subcommand("caption", "Caption one image");
  add_common(caption, false);
  caption->add_option("--checkpoint", checkpoint, "Captioner checkpoint")->required()->check(CLI::ExistingFile);
  caption->add_option("--image", image, "PNG image")->check(CLI::ExistingFile);
  caption->add_option("--data", data, "Manifest to take the image from")->check(CLI::ExistingFile);
  caption->add_option("--index", index_opt, "Line of the manifest");

  auto* explain = app.add_subcommand("explain", "Caption an image and render the region-word explanation");
  add_common(explain, false);
  explain->add_option("--checkpoint", checkpoint, "Captioner checkpoint")->required()->check(CLI::ExistingFile);
  explain->add_option("--rwa", rwa_path, "Region-word checkpoint")->required()->check(CLI::ExistingFile);
  explain->add_option("--image", image, "PNG image")->check(CLI::ExistingFile);
  explain->add_option("--boxes", boxes, "Regions as \"x,y,w,h;x,y,w,h\"");
  explain->add_option("--data", data, "Manifest providing image and ground-truth regions")->check(CLI::ExistingFile);
  explain->add_option("--index", index_opt, "Line of the manifest");
  explain->add_option("--threshold-factor", c.threshold_factor, "Pair selection factor c (threshold c/k)")
      ->check(CLI::PositiveNumber);

  auto* eval = app.add_subcommand("eval", "Greedy-decode a manifest and report caption metrics");
  add_common(eval, false);
  eval->add_option("--checkpoint", checkpoint, "Captioner checkpoint")->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Evaluation manifest")->required()->check(CLI::ExistingFile);

  auto* bench = app.add_subcommand("bench", "Time full-sequence versus step-by-step decoding");
  add_common(bench, false);
  bench->add_option("--checkpoint", checkpoint, "Captioner checkpoint (default: freshly initialized model)")
      ->check(CLI::ExistingFile);
  bench->add_option("-T,--length", T, "Sequence length")->check(CLI::PositiveNumber);
  bench->add_option("--reps", reps, "Timed repetitions")->check(CLI::PositiveNumber);

  auto* params = app.add_subcommand("params", "Count trainable parameters");
  add_common(params, false);
  params->add_flag("--paper-scale", paper_scale, "Count the full-size configuration (2048/300/512/9489)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return e.get_exit_code() == 0 ? 2 : e.get_exit_code();
  }

  try {
    Outputs files(c.out);
    if (gen->parsed()) {
      const TrainConfig cfg = load_config(c);
      const std::size_t n = count ? count : cfg.train_size;
      const std::size_t m = heldout ? heldout : cfg.heldout_size;
      const std::uint64_t first = first_train_seed(cfg.seed);
      std::string train_text, held_text;
      for (const auto& s : generate_scenes(first, n)) train_text += manifest_line(s) + "\n";
      for (const auto& s : generate_scenes(first + kHeldoutSeedOffset, m)) held_text += manifest_line(s) + "\n";
      files.add("train.jsonl", std::move(train_text));
      files.add("heldout.jsonl", std::move(held_text));
      out << dump({{"train", files.path("train.jsonl")}, {"train_count", n},
                   {"heldout", files.path("heldout.jsonl")}, {"heldout_count", m}});
    } else if (train_rwa_cmd->parsed()) {
      TrainConfig cfg = load_config(c);
      if (c.epochs) cfg.rwa_epochs = c.epochs;
      const auto samples = read_manifest(data);
      RwaRun run = train_rwa(samples, cfg, Progress(err, "rwa"));
      const double acc = rwa_alignment_accuracy(*run.rwa, run.vocab, samples);
      files.add("rwa.hck", encode_checkpoint(rwa_checkpoint(*run.rwa, run.vocab)));
      const std::string csv = run.curve.to_csv();
      files.add("rwa_loss.csv", csv);
      files.add("rwa_loss.svg", render_curves(csv, {"ce_loss"}));
      out << dump({{"checkpoint", files.path("rwa.hck")}, {"epochs", cfg.rwa_epochs}, {"alignment_accuracy", acc},
                   {"final_loss", run.curve.rows.back().ce}});
    } else if (train_cmd->parsed()) {
      const TrainConfig cfg = load_config(c);
      const auto samples = read_manifest(data);
      CaptionRun run = checkpoint.empty() ? start_caption_run(samples, cfg)
                                          : run_from_checkpoint(load_checkpoint(checkpoint), cfg);
      train_caption_phase1(run, samples, cfg, c.epochs ? c.epochs : cfg.epochs, Progress(err, "train"));
      files.add("captioner.hck", encode_checkpoint(run_checkpoint(run)));
      const std::string csv = run.curve.to_csv();
      files.add("phase1_loss.csv", csv);
      files.add("phase1_loss.svg", render_curves(csv, {"ce_loss"}));
      out << dump({{"checkpoint", files.path("captioner.hck")}, {"epochs_done", run.epochs_done},
                   {"final_ce", run.curve.rows.back().ce}});
    } else if (retrain->parsed()) {
      const TrainConfig cfg = load_config(c);
      const auto samples = read_manifest(data);
      const Checkpoint rwa_ckpt = load_checkpoint(rwa_path);
      auto rwa = rwa_from_checkpoint(rwa_ckpt);
      CaptionRun run = run_from_checkpoint(load_checkpoint(checkpoint), cfg);
      const std::span<const SceneSample> probe(samples.data(), ie_sample ? std::min(ie_sample, samples.size()) : samples.size());
      const double before = mean_ie(*run.model, *rwa, probe, cfg);
      train_caption_phase2(run, *rwa, checkpoint_vocab(rwa_ckpt), samples, cfg, c.epochs ? c.epochs : cfg.ie_epochs,
                           Progress(err, "retrain-ie"));
      const double after = mean_ie(*run.model, *rwa, probe, cfg);
      files.add("captioner_ie.hck", encode_checkpoint(run_checkpoint(run)));
      const std::string csv = run.curve.to_csv();
      files.add("phase2_loss.csv", csv);
      files.add("phase2_loss.svg", render_curves(csv, {"ce_loss", "ie_loss", "total"}));
      const nlohmann::json summary{{"checkpoint", files.path("captioner_ie.hck")},
                                   {"lambda_ie", cfg.lambda_ie},
                                   {"selection_factor", cfg.selection_factor},
                                   {"mean_ie_before", before},
                                   {"mean_ie_after", after},
                                   {"ie_sample", probe.size()}};
      files.add("ie_summary.json", dump(summary));
      out << dump(summary);
    } else if (caption->parsed() || explain->parsed()) {
      const TrainConfig cfg = load_config(c);
      auto model = captioner_from_checkpoint(load_checkpoint(checkpoint));
      Image img;
      std::vector<Box> regions;
      if (!image.empty()) {
        img = read_png(image);
        if (!boxes.empty()) regions = parse_boxes(boxes);
      } else if (!data.empty()) {
        const auto samples = read_manifest(data);
        index = index_opt.value_or(0);
        if (index >= samples.size()) throw Error("--index " + std::to_string(index) + " past end of manifest");
        img = samples[index].image;
        regions = samples[index].boxes();
      } else {
        throw Error("give --image or --data");
      }
      const auto ids = model->caption_ids(img);
      const std::string text = detokenize(ids, model->vocab());
      if (caption->parsed()) {
        const nlohmann::json j{{"caption", text}};
        if (!c.out.empty() && c.out != ".") files.add("caption.json", dump(j));
        out << dump(j);
      } else {
        if (regions.empty()) throw Error("explain needs regions: pass --boxes or use --data");
        if (ids.empty()) throw Error("explain: the model produced an empty caption");
        const Checkpoint rwa_ckpt = load_checkpoint(rwa_path);
        if (!(checkpoint_vocab(rwa_ckpt) == model->vocab())) {
          throw Error("explain: captioner and region-word checkpoints use different vocabularies");
        }
        auto rwa = rwa_from_checkpoint(rwa_ckpt);
        std::vector<std::string> words;
        for (int id : ids) words.push_back(model->vocab().token(id));
        const RelevanceMatrix m = rwa->explain(img, regions, ids, words);
        const ExplanationRender r = render_explanation(img, words, m.probs, regions, cfg.selection_factor);
        nlohmann::json j = relevance_json(m, r.selection);
        j["caption"] = text;
        files.add("explanation.svg", r.svg);
        files.add("explanation.json", dump(j));
        out << dump({{"caption", text}, {"pairs", j["pairs"]}, {"svg", files.path("explanation.svg")}});
      }
    } else if (eval->parsed()) {
      auto model = captioner_from_checkpoint(load_checkpoint(checkpoint));
      const auto samples = read_manifest(data);
      const Evaluation ev = evaluate(*model, samples);
      std::string captions;
      for (const auto& s : ev.captions) captions += s + "\n";
      files.add("metrics.json", dump(ev.report.to_json()));
      files.add("captions.txt", captions);
      out << dump(ev.report.to_json());
    } else if (bench->parsed()) {
      const TrainConfig cfg = load_config(c);
      std::unique_ptr<Captioner> model;
      if (!checkpoint.empty()) {
        model = captioner_from_checkpoint(load_checkpoint(checkpoint));
      } else {
        model = std::make_unique<Captioner>(cfg.model, dataset_vocab(generate_scenes(first_train_seed(cfg.seed), 64)),
                                            cfg.seed);
      }
      Tape tape(false);
      const Tensor fm0 = model->encode(tape, generate_scene(cfg.seed).image).value();
      const BenchmarkReport r = benchmark_decoder(model->decoder(), fm0, T, reps, cfg.seed);
      files.add("bench.json", dump(r.to_json()));
      out << dump(r.to_json());
    } else if (params->parsed()) {
      const TrainConfig cfg = load_config(c);
      nlohmann::json j;
      if (paper_scale) {
        const DecoderConfig d = full_scale_decoder();
        j = {{"scale", "full"}, {"decoder", to_json(d)}, {"decoder_parameters", HierAttDecoder::count(d)}};
      } else {
        CaptionerConfig m = cfg.model;
        m.decoder.vocab_size = dataset_vocab(generate_scenes(first_train_seed(cfg.seed), 256)).size();
        RwaConfig r = cfg.rwa;
        r.vocab_size = m.decoder.vocab_size;
        j = {{"scale", "desk"},
             {"encoder_parameters", VisualEncoder::count(m.encoder, false)},
             {"decoder_parameters", Captioner::count(m) - VisualEncoder::count(m.encoder, false)},
             {"captioner_parameters", Captioner::count(m)},
             {"region_word_parameters", RegionWordAttention::count(r)}};
      }
      out << dump(j);
    }
    files.commit();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace hieratt
