// Copyright 2026 The densevg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "densevg/cli.h"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "config_json.h"
#include "densevg/data.h"
#include "densevg/error.h"
#include "densevg/losses.h"
#include "densevg/metrics.h"
#include "densevg/model.h"
#include "densevg/train.h"
#include "json.hpp"

#ifndef DENSEVG_VERSION
#define DENSEVG_VERSION "unknown"
#endif

namespace densevg {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

enum class LogLevel { kQuiet = 0, kInfo = 1, kDebug = 2 };

LogLevel LogLevelFromEnv() {
  const char* value = std::getenv("DENSEVG_LOG");
  if (value == nullptr) return LogLevel::kInfo;
  const std::string v = value;
  if (v == "quiet" || v == "0") return LogLevel::kQuiet;
  if (v == "debug" || v == "2") return LogLevel::kDebug;
  return LogLevel::kInfo;
}

struct Context {
  std::ostream& out;
  std::ostream& err;
  LogLevel level = LogLevel::kInfo;

  void Log(LogLevel at, const std::string& message) const {
    if (level >= at) err << message << std::endl;
  }
};

// ---------------------------------------------------------------------------
// Options. Each command's options round-trip through JSON; the CLI and the
// replay command both run a command from its JSON form.

struct GenDataOptions {
  GeneratorConfig generator;
  std::size_t n_samples = 64;
  std::string id_prefix = "v";
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GenDataOptions, generator, n_samples,
                                   id_prefix, out)

struct TrainOptions {
  std::string data;
  std::string out;
  ModelConfig model;
  TrainConfig train;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(TrainOptions, data, out, model, train)

struct EvalOptions {
  std::string checkpoint;
  std::string data;
  std::string out;
  std::vector<double> thresholds = {0.3, 0.5, 0.7};
  std::string query_mode = "ordered";
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(EvalOptions, checkpoint, data, out,
                                   thresholds, query_mode, seed)

struct PredictOptions {
  std::string checkpoint;
  std::string features;
  std::string sentences;
  std::string annotation;  // optional
  std::string video_id;    // optional
  std::string out;
  std::string query_mode = "ordered";
  std::uint64_t seed = 0;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(PredictOptions, checkpoint, features,
                                   sentences, annotation, video_id, out,
                                   query_mode, seed)

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::vector<std::string> losses = {"pl", "pw", "none"};
  double h = 1e-5;
  double tolerance = 1e-4;
  std::size_t n_clips = 8;
  std::size_t n_queries = 2;
  std::size_t d_model = 16;
  std::size_t n_heads = 2;
  std::size_t enc_layers = 1;
  std::size_t dec_layers = 1;
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(GradcheckOptions, seed, losses, h, tolerance,
                                   n_clips, n_queries, d_model, n_heads,
                                   enc_layers, dec_layers, out)

struct AttnDumpOptions {
  std::string checkpoint;
  std::string data;
  std::vector<std::string> videos;  // empty: every video
  std::string out;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AttnDumpOptions, checkpoint, data, videos,
                                   out)

struct AblationOptions {
  std::string train_data;
  std::string test_data;
  std::string out;
  ModelConfig model;
  TrainConfig train;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE(AblationOptions, train_data, test_data, out,
                                   model, train)

// ---------------------------------------------------------------------------
// Shared plumbing.

std::string Absolute(const std::string& path) {
  if (path.empty()) return path;
  return fs::absolute(path).lexically_normal().string();
}

std::string Timestamp() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm utc{};
  gmtime_r(&now, &utc);
  std::ostringstream os;
  os << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void WriteText(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

fs::path PrepareOutDir(const std::string& out) {
  if (out.empty()) throw ConfigError("out", "an output directory is required");
  const fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) {
    throw Error("cannot create output directory " + dir.string() +
                (ec ? ": " + ec.message() : ""));
  }
  return dir;
}

// Written before any real work starts.
void WriteManifest(const fs::path& dir, const std::string& command,
                   const json& options, std::uint64_t seed,
                   const std::vector<std::string>& artifacts) {
  json manifest;
  manifest["tool"] = "densevg";
  manifest["version"] = DENSEVG_VERSION;
  manifest["command"] = command;
  manifest["options"] = options;
  manifest["seed"] = seed;
  json paths = json::array();
  for (const auto& a : artifacts) paths.push_back((dir / a).string());
  manifest["artifacts"] = paths;
  manifest["started_at"] = Timestamp();
  manifest["working_directory"] = fs::current_path().string();
  WriteText(dir / "manifest.json", manifest.dump(2) + "\n");
}

void SetFeatureWidths(ModelConfig& model,
                      std::span<const GroundingSample> samples) {
  model.video_dim = samples.front().clips.cols;
  model.query_dim = samples.front().queries.cols;
  for (const auto& s : samples) {
    if (s.clips.cols != model.video_dim || s.queries.cols != model.query_dim) {
      throw ShapeError(s.video_id + ": feature widths differ from the first video");
    }
  }
}

json EpochJson(const EpochLog& e) {
  return {{"epoch", e.epoch},
          {"regression_loss", e.regression_loss},
          {"attention_loss", e.attention_loss},
          {"total_loss", e.total_loss},
          {"train_miou", e.train_miou}};
}

std::string Fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

EpochObserver EpochPrinter(const Context& ctx, std::size_t epochs,
                           std::ofstream* log, const std::string& tag = "") {
  return [&ctx, epochs, log, tag](const EpochLog& e) {
    if (log != nullptr) *log << EpochJson(e).dump() << std::endl;
    const bool milestone = e.epoch % 10 == 0 || e.epoch == epochs || e.epoch == 1;
    ctx.Log(milestone ? LogLevel::kInfo : LogLevel::kDebug,
            tag + "epoch " + std::to_string(e.epoch) + "/" +
                std::to_string(epochs) + "  reg " + Fixed(e.regression_loss) +
                "  attn " + Fixed(e.attention_loss) + "  train mIoU " +
                Fixed(e.train_miou));
  };
}

AnnotationRecord PredictionRecord(const GroundingSample& sample,
                                  std::span<const MomentSpan> spans) {
  AnnotationRecord record;
  record.video_id = sample.video_id;
  record.duration = sample.duration;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    AnnotationQuery q;
    if (i < sample.sentences.size()) q.sentence = sample.sentences[i];
    q.start = spans[i].start * sample.duration;
    q.end = spans[i].end * sample.duration;
    record.queries.push_back(std::move(q));
  }
  return record;
}

// ---------------------------------------------------------------------------
// Commands.

int RunGenData(const GenDataOptions& o, const Context& ctx) {
  o.generator.Validate();
  if (o.n_samples == 0) throw ConfigError("n-samples", "must be at least 1");
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "gen-data", o, o.generator.seed,
                {"annotations.json", "features", "sentences"});
  const auto samples = GenerateDataset(o.generator, o.n_samples, o.id_prefix);
  WriteDataset(dir, samples);
  ctx.out << "wrote " << samples.size() << " samples to " << dir.string()
          << "\n";
  return kExitOk;
}

int RunTrain(TrainOptions o, const Context& ctx) {
  const auto samples = LoadDataset(o.data);
  SetFeatureWidths(o.model, samples);
  o.model.Validate();
  o.train.Validate();
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "train", o, o.train.seed,
                {"final.json", "final.bin", "best.json", "best.bin",
                 "train_log.jsonl"});
  std::ofstream log(dir / "train_log.jsonl", std::ios::trunc);
  if (!log) throw Error("cannot write " + (dir / "train_log.jsonl").string());
  ctx.Log(LogLevel::kInfo, "training on " + std::to_string(samples.size()) +
                               " videos, " +
                               std::to_string(ParameterCount(o.model)) +
                               " parameters");
  const TrainResult result =
      Train(o.train, o.model, samples, EpochPrinter(ctx, o.train.epochs, &log));
  SaveCheckpoint(result.model, dir / "final");
  SaveCheckpoint(result.best_model ? *result.best_model : result.model,
                 dir / "best");
  const EvalReport report = EvaluateModel(result.model, samples,
                                          QueryMode::kOrdered,
                                          o.train.thresholds, o.train.seed);
  if (!result.log.empty()) {
    ctx.out << "final train mIoU " << Fixed(result.log.back().train_miou)
            << " (best " << Fixed(result.best_miou) << " at epoch "
            << result.best_epoch << ")\n";
  }
  ctx.out << "training-set evaluation, whole paragraphs:\n"
          << ReportTable(report);
  return kExitOk;
}

int RunEval(const EvalOptions& o, const Context& ctx) {
  const QueryMode mode = ParseQueryMode(o.query_mode);
  for (double t : o.thresholds) {
    if (!(t > 0.0 && t < 1.0)) throw ConfigError("thresholds", "must lie in (0, 1)");
  }
  if (o.thresholds.empty()) throw ConfigError("thresholds", "need at least one");
  const GroundingModel model = LoadCheckpoint(o.checkpoint);
  const auto samples = LoadDataset(o.data);
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "eval", o, o.seed,
                {"report.txt", "report.json", "predictions.json"});
  Rng rng(o.seed);
  std::vector<SpanRecord> predictions, truth;
  std::vector<AnnotationRecord> records;
  for (const auto& sample : samples) {
    const auto spans = PredictParagraph(model, sample, mode, &rng);
    for (std::size_t i = 0; i < spans.size(); ++i) {
      predictions.push_back({sample.video_id, i, spans[i]});
      truth.push_back({sample.video_id, i, sample.spans[i]});
    }
    records.push_back(PredictionRecord(sample, spans));
  }
  const EvalReport report = Evaluate(predictions, truth, o.thresholds);
  const std::string table = ReportTable(report);
  WriteText(dir / "report.txt", table);
  WriteText(dir / "report.json", ReportJson(report) + "\n");
  WriteAnnotationRecords(dir / "predictions.json", records);
  ctx.out << table;
  return kExitOk;
}

int RunPredict(const PredictOptions& o, const Context& ctx) {
  const QueryMode mode = ParseQueryMode(o.query_mode);
  const GroundingModel model = LoadCheckpoint(o.checkpoint);
  GroundingSample sample;
  sample.clips = ReadFeatures(o.features);
  sample.queries = ReadFeatures(o.sentences);
  sample.video_id = o.video_id.empty() ? fs::path(o.features).stem().string()
                                       : o.video_id;
  sample.duration = 1.0;
  // Placeholder targets; only their count is used for prediction.
  sample.spans.assign(sample.queries.rows, MomentSpan{});
  if (!o.annotation.empty()) {
    const auto records = NormalizeAnnotations(ReadAnnotationRecords(o.annotation));
    const NormalizedAnnotation* match = nullptr;
    for (const auto& r : records) {
      if (o.video_id.empty() ? records.size() == 1 : r.video_id == o.video_id) {
        match = &r;
      }
    }
    if (match == nullptr) {
      throw Error(o.annotation + ": no record for video '" + sample.video_id +
                  "' (pass --video-id when the file holds several)");
    }
    if (match->spans.size() != sample.queries.rows) {
      throw ShapeError(o.annotation + ": " + std::to_string(match->spans.size()) +
                       " queries but " + std::to_string(sample.queries.rows) +
                       " sentence feature rows");
    }
    sample.video_id = match->video_id;
    sample.duration = match->duration;
    sample.sentences = match->sentences;
  }
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "predict", o, o.seed, {"predictions.json"});
  Rng rng(o.seed);
  const auto spans = PredictParagraph(model, sample, mode, &rng);
  const AnnotationRecord record = PredictionRecord(sample, spans);
  WriteAnnotationRecords(dir / "predictions.json", std::span(&record, 1));
  ctx.out << "wrote " << spans.size() << " predictions for "
          << sample.video_id << " to " << (dir / "predictions.json").string()
          << "\n";
  return kExitOk;
}

int RunGradcheck(const GradcheckOptions& o, const Context& ctx) {
  if (o.losses.empty()) throw ConfigError("loss", "need at least one variant");
  std::vector<AttentionLossKind> kinds;
  for (const auto& name : o.losses) kinds.push_back(ParseAttentionLossKind(name));
  if (!(o.h > 0.0)) throw ConfigError("h", "must be positive");

  GeneratorConfig g;
  g.n_clips = o.n_clips;
  g.feature_dim = o.d_model;
  g.min_events = g.max_events = o.n_queries;
  g.vocab_size = std::max<std::size_t>(o.n_queries, 4);
  g.min_span_clips = 1;
  g.seed = o.seed;
  g.vocab_seed = o.seed;
  g.Validate();
  ModelConfig m;
  m.video_dim = m.query_dim = o.d_model;
  m.d_model = o.d_model;
  m.n_heads = o.n_heads;
  m.n_enc_layers = o.enc_layers;
  m.n_dec_layers = o.dec_layers;
  m.ffn_dim = 2 * o.d_model;
  m.dropout = 0.0;
  m.max_clips = o.n_clips;
  m.seed = o.seed;
  m.Validate();

  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "gradcheck", o, o.seed, {"report.json"});
  const GroundingSample sample = GenerateDataset(g, 1, "gradcheck")[0];
  GroundingModel model(m);
  json report = json::object();
  double worst = 0.0;
  std::string worst_name, worst_variant;
  const auto start = std::chrono::steady_clock::now();
  for (AttentionLossKind kind : kinds) {
    TrainConfig config;
    config.attention_loss = kind;
    const FiniteDiffReport r = FiniteDiffCheck(
        [&](ParameterSet&) {
          return ComputeSampleLoss(model, sample, QueryMode::kOrdered, config)
              .total;
        },
        model.parameters(), o.h);
    const std::string variant = ToString(kind);
    ctx.out << "loss " << variant << ": max rel err "
            << std::scientific << std::setprecision(3) << r.max_rel_error
            << std::defaultfloat << "\n";
    json params = json::object();
    for (const auto& p : r.per_parameter) {
      ctx.out << "  " << std::left << std::setw(40) << p.name << std::right
              << std::scientific << std::setprecision(3) << p.max_rel_error
              << std::defaultfloat << "\n";
      params[p.name] = {{"max_rel_error", p.max_rel_error},
                        {"worst_index", p.worst_index},
                        {"analytic", p.analytic},
                        {"numeric", p.numeric}};
      if (worst_name.empty() || p.max_rel_error > worst) {
        worst = p.max_rel_error;
        worst_name = p.name;
        worst_variant = variant;
      }
    }
    report[variant] = {{"max_rel_error", r.max_rel_error},
                       {"parameters", params}};
  }
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
          .count();
  report["max_rel_error"] = worst;
  report["worst_parameter"] = worst_name;
  report["worst_loss"] = worst_variant;
  report["tolerance"] = o.tolerance;
  report["parameter_count"] = model.parameters().NumScalars();
  WriteText(dir / "report.json", report.dump(2) + "\n");
  ctx.Log(LogLevel::kInfo, "gradcheck took " + Fixed(seconds, 1) + " s");
  ctx.out << "max rel err " << std::scientific << std::setprecision(3) << worst
          << std::defaultfloat << " (worst: " << worst_name << ", loss "
          << worst_variant << ")\n";
  if (!(worst < o.tolerance)) {
    ctx.err << "gradcheck FAILED: " << worst_name << " (loss " << worst_variant
            << ") exceeds tolerance " << o.tolerance << "\n";
    return kExitFailure;
  }
  ctx.out << "gradcheck passed\n";
  return kExitOk;
}

int RunAttnDump(const AttnDumpOptions& o, const Context& ctx) {
  const GroundingModel model = LoadCheckpoint(o.checkpoint);
  auto samples = LoadDataset(o.data);
  if (!o.videos.empty()) {
    std::vector<GroundingSample> picked;
    for (const auto& id : o.videos) {
      auto it = std::find_if(samples.begin(), samples.end(),
                             [&](const auto& s) { return s.video_id == id; });
      if (it == samples.end()) throw Error("no video '" + id + "' in " + o.data);
      picked.push_back(*it);
    }
    samples = std::move(picked);
  }
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "attn-dump", o, model.config().seed,
                {"attention", "summary.json"});
  fs::create_directories(dir / "attention");
  json videos = json::array();
  double mass_sum = 0.0, fraction_sum = 0.0;
  std::size_t count = 0;
  for (const auto& sample : samples) {
    const Matrix attention = ParagraphAttention(model, sample);
    WriteFeatures(dir / "attention" / (sample.video_id + ".feat"), attention);
    const auto mass = InWindowMass(attention, sample.spans);
    std::vector<double> fraction;
    for (const auto& span : sample.spans) {
      const ClipMask m = GtClipMask(span, attention.cols);
      const auto inside = std::count_if(m.begin(), m.end(), [](auto v) { return v != 0; });
      fraction.push_back(static_cast<double>(inside) / attention.cols);
    }
    for (std::size_t i = 0; i < mass.size(); ++i) {
      mass_sum += mass[i];
      fraction_sum += fraction[i];
      ++count;
    }
    videos.push_back({{"video_id", sample.video_id},
                      {"in_window_mass", mass},
                      {"window_fraction", fraction}});
  }
  const double mean_mass = mass_sum / static_cast<double>(count);
  const double mean_fraction = fraction_sum / static_cast<double>(count);
  json summary = {{"videos", videos},
                  {"query_count", count},
                  {"mean_in_window_mass", mean_mass},
                  {"mean_window_fraction", mean_fraction}};
  WriteText(dir / "summary.json", summary.dump(2) + "\n");
  ctx.out << "mean in-window attention mass " << Fixed(mean_mass)
          << " over " << count << " queries (uniform attention would give "
          << Fixed(mean_fraction) << ")\n";
  return kExitOk;
}

int RunAblationCommand(AblationOptions o, const Context& ctx) {
  const auto train = LoadDataset(o.train_data);
  const auto test = LoadDataset(o.test_data);
  SetFeatureWidths(o.model, train);
  o.model.Validate();
  o.train.Validate();
  const fs::path dir = PrepareOutDir(o.out);
  WriteManifest(dir, "ablation", o, o.train.seed,
                {"ablation.txt", "ablation.json"});
  const AblationResult result = RunAblation(
      train, test, o.train, o.model, EpochPrinter(ctx, o.train.epochs, nullptr));
  json rows = json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"row", r.row},
                    {"train_mode", ToString(r.train_mode)},
                    {"test_mode", ToString(r.test_mode)},
                    {"miou", r.report.mean_iou},
                    {"thresholds", r.report.thresholds},
                    {"recalls", r.report.recalls}});
  }
  WriteText(dir / "ablation.txt", result.Table());
  WriteText(dir / "ablation.json", json{{"rows", rows}}.dump(2) + "\n");
  ctx.out << result.Table();
  return kExitOk;
}

int Dispatch(const std::string& command, const json& options,
             const Context& ctx) {
  if (command == "gen-data") return RunGenData(options.get<GenDataOptions>(), ctx);
  if (command == "train") return RunTrain(options.get<TrainOptions>(), ctx);
  if (command == "eval") return RunEval(options.get<EvalOptions>(), ctx);
  if (command == "predict") return RunPredict(options.get<PredictOptions>(), ctx);
  if (command == "gradcheck") {
    return RunGradcheck(options.get<GradcheckOptions>(), ctx);
  }
  if (command == "attn-dump") {
    return RunAttnDump(options.get<AttnDumpOptions>(), ctx);
  }
  if (command == "ablation") {
    return RunAblationCommand(options.get<AblationOptions>(), ctx);
  }
  throw Error("manifest names unknown command '" + command + "'");
}

// ---------------------------------------------------------------------------
// Flag definitions.

struct ModelFlags {
  ModelConfig config;
  std::size_t ffn_dim = 0;  // 0: four times d_model
  bool no_positional_encoding = false;
  std::uint64_t init_seed = 0;
  CLI::Option* init_seed_option = nullptr;
};

void AddModelFlags(CLI::App* app, ModelFlags& f) {
  app->add_option("--d-model", f.config.d_model, "model width")
      ->capture_default_str();
  app->add_option("--heads", f.config.n_heads, "attention heads; must divide --d-model")
      ->capture_default_str();
  app->add_option("--enc-layers", f.config.n_enc_layers, "encoder layers")
      ->capture_default_str();
  app->add_option("--dec-layers", f.config.n_dec_layers, "decoder layers")
      ->capture_default_str();
  app->add_option("--ffn-dim", f.ffn_dim,
                  "feed-forward width (0 means 4 x d-model)")
      ->capture_default_str();
  app->add_option("--dropout", f.config.dropout, "dropout rate during training")
      ->capture_default_str();
  app->add_option("--n-clips", f.config.max_clips,
                  "clips per video; other counts are resampled uniformly")
      ->capture_default_str();
  app->add_option("--max-queries", f.config.max_queries,
                  "sentences per decoder pass; longer paragraphs are split")
      ->capture_default_str();
  app->add_flag("--no-pe", f.no_positional_encoding,
                "disable sinusoidal positional encoding");
  f.init_seed_option = app->add_option(
      "--init-seed", f.init_seed, "weight initialization seed (default: --seed)");
}

ModelConfig ResolveModel(const ModelFlags& f, std::uint64_t seed) {
  ModelConfig c = f.config;
  c.ffn_dim = f.ffn_dim == 0 ? 4 * c.d_model : f.ffn_dim;
  c.positional_encoding = !f.no_positional_encoding;
  c.seed = f.init_seed_option->count() > 0 ? f.init_seed : seed;
  return c;
}

struct TrainFlags {
  TrainConfig config;
  std::string attention_loss = "pl";
  std::string iou_loss = "giou";
  std::string query_mode = "ordered";
};

void AddTrainFlags(CLI::App* app, TrainFlags& f) {
  app->add_option("--lr", f.config.learning_rate, "Adam learning rate")
      ->capture_default_str();
  app->add_option("--batch-size", f.config.batch_size,
                  "paragraphs per optimizer step")
      ->capture_default_str();
  app->add_option("--epochs", f.config.epochs, "passes over the dataset")
      ->capture_default_str();
  app->add_option("--lambda", f.config.weights.lambda,
                  "weight of the L1 boundary term of the regression loss")
      ->capture_default_str();
  app->add_option("--beta", f.config.weights.beta,
                  "weight of the interval-overlap term (1 - GIoU or 1 - IoU) "
                  "of the regression loss")
      ->capture_default_str();
  app->add_option("--attn-loss", f.attention_loss,
                  "attention supervision: pl = -log of the cross-attention "
                  "mass inside the ground-truth window; pw = mean -log "
                  "attention over the clips inside the window; none = off")
      ->capture_default_str();
  app->add_option("--iou-loss", f.iou_loss,
                  "overlap term of the regression loss: giou or iou")
      ->capture_default_str();
  app->add_option("--seed", f.config.seed, "shuffling, sampling and dropout seed")
      ->capture_default_str();
  app->add_option("--k-min", f.config.k_min,
                  "fewest sentences sampled per paragraph per step")
      ->capture_default_str();
  app->add_option("--k-max", f.config.k_max,
                  "most sentences sampled per paragraph per step")
      ->capture_default_str();
  app->add_option("--query-mode", f.query_mode,
                  "ordered, shuffled or single")
      ->capture_default_str();
  app->add_option("--thresholds", f.config.thresholds,
                  "IoU thresholds for recall reporting")
      ->delimiter(',')
      ->capture_default_str();
  app->add_option("--warmup-steps", f.config.warmup_steps,
                  "linear learning-rate warmup steps (0 = off)")
      ->capture_default_str();
}

TrainConfig ResolveTrain(const TrainFlags& f) {
  TrainConfig c = f.config;
  c.attention_loss = ParseAttentionLossKind(f.attention_loss);
  c.iou_loss = ParseIouLossKind(f.iou_loss);
  c.query_mode = ParseQueryMode(f.query_mode);
  return c;
}

int Guarded(const std::function<int()>& body, const Context& ctx) {
  try {
    return body();
  } catch (const ConfigError& e) {
    ctx.err << "error: --" << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    ctx.err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
}

}  // namespace

int RunCli(const std::vector<std::string>& args, std::ostream& out,
           std::ostream& err) {
  const Context ctx{out, err, LogLevelFromEnv()};
  CLI::App app{"Dense video grounding by parallel span regression.", "densevg"};
  app.require_subcommand(1);
  app.set_version_flag("--version", DENSEVG_VERSION);

  GenDataOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-data", "write a synthetic dataset");
  gen_cmd->add_option("--out", gen.out, "output directory")->required();
  gen_cmd->add_option("--n-samples", gen.n_samples, "videos to generate")
      ->capture_default_str();
  gen_cmd->add_option("--seed", gen.generator.seed, "sample seed")
      ->capture_default_str();
  gen_cmd->add_option("--vocab-seed", gen.generator.vocab_seed,
                      "seed of the shared event-code vocabulary")
      ->capture_default_str();
  gen_cmd->add_option("--n-clips", gen.generator.n_clips, "clips per video")
      ->capture_default_str();
  gen_cmd->add_option("--feature-dim", gen.generator.feature_dim,
                      "clip and sentence feature width")
      ->capture_default_str();
  gen_cmd->add_option("--min-events", gen.generator.min_events,
                      "fewest events (sentences) per video")
      ->capture_default_str();
  gen_cmd->add_option("--max-events", gen.generator.max_events,
                      "most events (sentences) per video")
      ->capture_default_str();
  gen_cmd->add_option("--min-span-clips", gen.generator.min_span_clips,
                      "shortest event in clips")
      ->capture_default_str();
  gen_cmd->add_option("--vocab-size", gen.generator.vocab_size,
                      "number of distinct event codes")
      ->capture_default_str();
  gen_cmd->add_option("--noise", gen.generator.noise,
                      "Gaussian noise stddev per feature entry")
      ->capture_default_str();
  gen_cmd->add_option("--ambiguity", gen.generator.ambiguity,
                      "probability that an event repeats an earlier code")
      ->capture_default_str();
  gen_cmd->add_option("--context-scale", gen.generator.context_scale,
                      "weight of the ordinal context vector in sentences")
      ->capture_default_str();
  gen_cmd->add_option("--drift-scale", gen.generator.drift_scale,
                      "background drift at the last clip")
      ->capture_default_str();
  gen_cmd->add_option("--id-prefix", gen.id_prefix, "video id prefix")
      ->capture_default_str();

  TrainOptions train;
  ModelFlags train_model;
  TrainFlags train_flags;
  auto* train_cmd = app.add_subcommand("train", "train a model on a dataset");
  train_cmd->add_option("--data", train.data, "dataset directory")->required();
  train_cmd->add_option("--out", train.out, "output directory")->required();
  AddModelFlags(train_cmd, train_model);
  AddTrainFlags(train_cmd, train_flags);

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--checkpoint", eval.checkpoint,
                       "checkpoint base path (without .json/.bin)")
      ->required();
  eval_cmd->add_option("--data", eval.data, "dataset directory")->required();
  eval_cmd->add_option("--out", eval.out, "output directory")->required();
  eval_cmd->add_option("--thresholds", eval.thresholds, "IoU thresholds")
      ->delimiter(',')
      ->capture_default_str();
  eval_cmd->add_option("--query-mode", eval.query_mode,
                       "ordered, shuffled or single")
      ->capture_default_str();
  eval_cmd->add_option("--seed", eval.seed, "seed for shuffled decoding")
      ->capture_default_str();

  PredictOptions predict;
  auto* predict_cmd =
      app.add_subcommand("predict", "predict spans for one video");
  predict_cmd->add_option("--checkpoint", predict.checkpoint,
                          "checkpoint base path")
      ->required();
  predict_cmd->add_option("--features", predict.features,
                          "clip feature file (N x d)")
      ->required();
  predict_cmd->add_option("--sentences", predict.sentences,
                          "sentence feature file (K x d), paragraph order")
      ->required();
  predict_cmd->add_option("--annotation", predict.annotation,
                          "annotation file supplying duration and sentences");
  predict_cmd->add_option("--video-id", predict.video_id,
                          "video id (selects the annotation record)");
  predict_cmd->add_option("--out", predict.out, "output directory")->required();
  predict_cmd->add_option("--query-mode", predict.query_mode,
                          "ordered, shuffled or single")
      ->capture_default_str();
  predict_cmd->add_option("--seed", predict.seed, "seed for shuffled decoding")
      ->capture_default_str();

  GradcheckOptions grad;
  std::string grad_loss = "all";
  auto* grad_cmd = app.add_subcommand(
      "gradcheck", "compare analytic and finite-difference gradients");
  grad_cmd->add_option("--out", grad.out, "output directory")->required();
  grad_cmd->add_option("--seed", grad.seed, "data and initialization seed")
      ->capture_default_str();
  grad_cmd->add_option("--loss", grad_loss,
                       "attention loss variant: pl, pw, none or all")
      ->capture_default_str();
  grad_cmd->add_option("--step", grad.h, "central-difference step")
      ->capture_default_str();
  grad_cmd->add_option("--tolerance", grad.tolerance,
                       "largest accepted relative error")
      ->capture_default_str();
  grad_cmd->add_option("--n-clips", grad.n_clips, "clips")->capture_default_str();
  grad_cmd->add_option("--n-queries", grad.n_queries, "sentences")
      ->capture_default_str();
  grad_cmd->add_option("--d-model", grad.d_model, "model and feature width")
      ->capture_default_str();
  grad_cmd->add_option("--heads", grad.n_heads, "attention heads")
      ->capture_default_str();
  grad_cmd->add_option("--enc-layers", grad.enc_layers, "encoder layers")
      ->capture_default_str();
  grad_cmd->add_option("--dec-layers", grad.dec_layers, "decoder layers")
      ->capture_default_str();

  AttnDumpOptions attn;
  auto* attn_cmd = app.add_subcommand(
      "attn-dump", "write cross-attention matrices and in-window mass");
  attn_cmd->add_option("--checkpoint", attn.checkpoint, "checkpoint base path")
      ->required();
  attn_cmd->add_option("--data", attn.data, "dataset directory")->required();
  attn_cmd->add_option("--video", attn.videos,
                       "video ids to dump (default: all)")
      ->delimiter(',');
  attn_cmd->add_option("--out", attn.out, "output directory")->required();

  AblationOptions ablation;
  ModelFlags ablation_model;
  TrainFlags ablation_flags;
  auto* ablation_cmd = app.add_subcommand(
      "ablation",
      "train ordered, shuffled and single-sentence models and cross-test them");
  ablation_cmd->add_option("--train-data", ablation.train_data,
                           "training dataset directory")
      ->required();
  ablation_cmd->add_option("--test-data", ablation.test_data,
                           "held-out dataset directory")
      ->required();
  ablation_cmd->add_option("--out", ablation.out, "output directory")->required();
  AddModelFlags(ablation_cmd, ablation_model);
  AddTrainFlags(ablation_cmd, ablation_flags);

  std::string manifest_path, replay_out;
  auto* replay_cmd = app.add_subcommand(
      "replay", "re-run a command from the manifest.json it wrote");
  replay_cmd->add_option("--manifest", manifest_path, "manifest file")->required();
  replay_cmd->add_option("--out", replay_out,
                         "output directory (default: the recorded one)");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  return Guarded(
      [&]() -> int {
        if (*gen_cmd) {
          gen.out = Absolute(gen.out);
          return Dispatch("gen-data", gen, ctx);
        }
        if (*train_cmd) {
          train.data = Absolute(train.data);
          train.out = Absolute(train.out);
          train.train = ResolveTrain(train_flags);
          train.model = ResolveModel(train_model, train.train.seed);
          return Dispatch("train", train, ctx);
        }
        if (*eval_cmd) {
          eval.checkpoint = Absolute(eval.checkpoint);
          eval.data = Absolute(eval.data);
          eval.out = Absolute(eval.out);
          return Dispatch("eval", eval, ctx);
        }
        if (*predict_cmd) {
          predict.checkpoint = Absolute(predict.checkpoint);
          predict.features = Absolute(predict.features);
          predict.sentences = Absolute(predict.sentences);
          predict.annotation = Absolute(predict.annotation);
          predict.out = Absolute(predict.out);
          return Dispatch("predict", predict, ctx);
        }
        if (*grad_cmd) {
          grad.out = Absolute(grad.out);
          if (grad_loss != "all") {
            ParseAttentionLossKind(grad_loss);
            grad.losses = {grad_loss};
          }
          return Dispatch("gradcheck", grad, ctx);
        }
        if (*attn_cmd) {
          attn.checkpoint = Absolute(attn.checkpoint);
          attn.data = Absolute(attn.data);
          attn.out = Absolute(attn.out);
          return Dispatch("attn-dump", attn, ctx);
        }
        if (*ablation_cmd) {
          ablation.train_data = Absolute(ablation.train_data);
          ablation.test_data = Absolute(ablation.test_data);
          ablation.out = Absolute(ablation.out);
          ablation.train = ResolveTrain(ablation_flags);
          ablation.model = ResolveModel(ablation_model, ablation.train.seed);
          return Dispatch("ablation", ablation, ctx);
        }
        std::ifstream in(manifest_path);
        if (!in) throw Error("cannot open manifest " + manifest_path);
        json manifest;
        try {
          manifest = json::parse(in);
        } catch (const json::exception& e) {
          throw ParseError(manifest_path + ": " + e.what());
        }
        json options = manifest.at("options");
        if (!replay_out.empty()) options["out"] = Absolute(replay_out);
        return Dispatch(manifest.at("command").get<std::string>(), options, ctx);
      },
      ctx);
}

int RunCli(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return RunCli(args, std::cout, std::cerr);
}

}  // namespace densevg
