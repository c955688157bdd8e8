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

#include "densevg/data.h"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <sstream>

#include "json.hpp"

namespace densevg {
namespace {

constexpr std::uint8_t kMagic[4] = {'P', 'R', 'V', 'G'};
constexpr std::uint32_t kFeatureVersion = 1;
constexpr std::size_t kHeaderBytes = 16;

void PutU32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint32_t GetU32(std::span<const std::uint8_t> bytes, std::size_t offset) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes[offset + i]) << (8 * i);
  return v;
}

double RoundToFloat(double v) { return static_cast<double>(static_cast<float>(v)); }

void Normalize(std::span<double> v, double target_norm) {
  double norm = 0.0;
  for (double x : v) norm += x * x;
  norm = std::sqrt(norm);
  for (double& x : v) x *= target_norm / norm;
}

std::string ParseContext(std::size_t record, const std::string& field) {
  return "annotation record " + std::to_string(record) + ", field '" + field + "'";
}

}  // namespace

void GroundingSample::Validate() const {
  const std::size_t k = spans.size();
  if (k == 0) throw Error(video_id + ": sample has no queries");
  if (queries.rows != k) {
    throw Error(video_id + ": " + std::to_string(queries.rows) +
                " query feature rows for " + std::to_string(k) + " spans");
  }
  if (clips.rows == 0 || clips.cols == 0) throw Error(video_id + ": no clip features");
  if (!sentences.empty() && sentences.size() != k) {
    throw Error(video_id + ": sentence list does not match queries");
  }
  if ((!event_codes.empty() && event_codes.size() != k) ||
      (!event_ranks.empty() && event_ranks.size() != k)) {
    throw Error(video_id + ": event metadata does not match queries");
  }
  for (const auto& s : spans) {
    if (!s.IsValid()) throw Error(video_id + ": invalid span " + s.ToString());
  }
  for (const Matrix* m : {&clips, &queries}) {
    for (double v : m->values) {
      if (!std::isfinite(v)) throw Error(video_id + ": non-finite feature value");
    }
  }
}

GroundingSample GroundingSample::SelectQueries(
    std::span<const std::size_t> indices) const {
  GroundingSample out;
  out.video_id = video_id;
  out.duration = duration;
  out.clips = clips;
  out.queries = queries.SelectRows(indices);
  for (std::size_t i : indices) {
    out.spans.push_back(spans.at(i));
    if (!sentences.empty()) out.sentences.push_back(sentences[i]);
    if (!event_codes.empty()) out.event_codes.push_back(event_codes[i]);
    if (!event_ranks.empty()) out.event_ranks.push_back(event_ranks[i]);
  }
  return out;
}

void GeneratorConfig::Validate() const {
  if (n_clips == 0) throw ConfigError("n-clips", "must be at least 1");
  if (feature_dim == 0) throw ConfigError("feature-dim", "must be at least 1");
  if (min_events == 0 || min_events > max_events) {
    throw ConfigError("min-events", "need 1 <= min-events <= max-events");
  }
  if (min_span_clips == 0) throw ConfigError("min-span-clips", "must be at least 1");
  if (vocab_size < max_events) {
    throw ConfigError("vocab-size", "must be at least max-events");
  }
  if (!(noise >= 0.0)) throw ConfigError("noise", "must be nonnegative");
  if (!(ambiguity >= 0.0 && ambiguity <= 1.0)) {
    throw ConfigError("ambiguity", "must lie in [0, 1]");
  }
  if (max_events * min_span_clips + (max_events - 1) > n_clips) {
    throw ConfigError("n-clips", "too few clips to place max-events events of min-span-clips "
                                 "each with one-clip gaps");
  }
}

SyntheticVocabulary::SyntheticVocabulary(const GeneratorConfig& config)
    : codes_(config.vocab_size, config.feature_dim),
      ordinals_(config.max_events, config.feature_dim),
      background_(config.feature_dim),
      drift_scale_(config.drift_scale) {
  const std::size_t d = config.feature_dim;
  const std::size_t total = config.vocab_size + config.max_events + 1;
  Matrix basis(total, d);
  Rng rng = Rng::Stream(config.vocab_seed, 0);
  for (double& v : basis.values) v = rng.Normal();
  if (total <= d) {
    // Gram-Schmidt, twice for numerical orthogonality.
    for (std::size_t i = 0; i < total; ++i) {
      auto row = basis.Row(i);
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t j = 0; j < i; ++j) {
          const auto prev = basis.Row(j);
          double dot = 0.0, norm = 0.0;
          for (std::size_t c = 0; c < d; ++c) {
            dot += row[c] * prev[c];
            norm += prev[c] * prev[c];
          }
          for (std::size_t c = 0; c < d; ++c) row[c] -= dot / norm * prev[c];
        }
      }
    }
  }
  const double target = std::sqrt(static_cast<double>(d));
  for (std::size_t i = 0; i < total; ++i) Normalize(basis.Row(i), target);
  for (std::size_t i = 0; i < config.vocab_size; ++i) {
    std::copy_n(basis.Row(i).begin(), d, codes_.Row(i).begin());
  }
  for (std::size_t i = 0; i < config.max_events; ++i) {
    std::copy_n(basis.Row(config.vocab_size + i).begin(), d, ordinals_.Row(i).begin());
  }
  std::copy_n(basis.Row(total - 1).begin(), d, background_.begin());
}

std::span<const double> SyntheticVocabulary::Code(std::size_t code) const {
  if (code >= codes_.rows) throw Error("event code out of range");
  return codes_.Row(code);
}

std::span<const double> SyntheticVocabulary::Ordinal(std::size_t rank) const {
  if (rank >= ordinals_.rows) throw Error("ordinal rank out of range");
  return ordinals_.Row(rank);
}

std::vector<double> SyntheticVocabulary::Background(std::size_t clip,
                                                    std::size_t n_clips) const {
  const double t = n_clips > 1 ? static_cast<double>(clip) /
                                     static_cast<double>(n_clips - 1)
                               : 0.0;
  std::vector<double> out(background_.size());
  for (std::size_t c = 0; c < out.size(); ++c) out[c] = drift_scale_ * t * background_[c];
  return out;
}

GroundingSample GenerateSample(const GeneratorConfig& config,
                               const SyntheticVocabulary& vocab, Rng& rng,
                               std::string video_id) {
  config.Validate();
  const std::size_t n = config.n_clips, d = config.feature_dim;
  const std::size_t k = rng.UniformInt(config.min_events, config.max_events);
  const std::size_t min_len = config.min_span_clips;
  if (k * min_len + (k - 1) > n) {
    throw Error("cannot place " + std::to_string(k) + " events in " +
                std::to_string(n) + " clips (config too dense)");
  }

  // Event lengths, then the leftover clips spread over the k + 1 gaps.
  // k * max_len + (k - 1) <= n, so any draw fits.
  const std::size_t max_len = (n - (k - 1)) / k;
  std::vector<std::size_t> lengths(k);
  std::size_t used = k - 1;
  for (auto& len : lengths) {
    len = rng.UniformInt(min_len, max_len);
    used += len;
  }
  std::vector<std::size_t> extra(k + 1, 0);
  for (std::size_t i = used; i < n; ++i) ++extra[rng.UniformInt(0, k)];

  std::vector<std::size_t> begins(k), ends(k);
  std::size_t cursor = extra[0];
  for (std::size_t e = 0; e < k; ++e) {
    begins[e] = cursor;
    ends[e] = cursor + lengths[e];
    cursor = ends[e] + (e + 1 < k ? 1 + extra[e + 1] : 0);
  }

  // Event codes; repeats make single-sentence grounding ambiguous.
  std::vector<std::size_t> codes(k), ranks(k, 0);
  std::vector<std::size_t> distinct_used;
  for (std::size_t e = 0; e < k; ++e) {
    if (e > 0 && rng.Uniform() < config.ambiguity) {
      codes[e] = distinct_used[rng.UniformInt(0, distinct_used.size() - 1)];
    } else {
      std::vector<std::size_t> unused;
      for (std::size_t c = 0; c < config.vocab_size; ++c) {
        if (std::find(distinct_used.begin(), distinct_used.end(), c) ==
            distinct_used.end()) {
          unused.push_back(c);
        }
      }
      codes[e] = unused[rng.UniformInt(0, unused.size() - 1)];
      distinct_used.push_back(codes[e]);
    }
    for (std::size_t p = 0; p < e; ++p) {
      if (codes[p] == codes[e]) ++ranks[e];
    }
  }

  GroundingSample sample;
  sample.video_id = std::move(video_id);
  sample.duration = static_cast<double>(n);
  sample.clips = Matrix(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    const auto bg = vocab.Background(i, n);
    auto row = sample.clips.Row(i);
    for (std::size_t c = 0; c < d; ++c) row[c] = bg[c];
  }
  for (std::size_t e = 0; e < k; ++e) {
    const auto code = vocab.Code(codes[e]);
    for (std::size_t i = begins[e]; i < ends[e]; ++i) {
      auto row = sample.clips.Row(i);
      for (std::size_t c = 0; c < d; ++c) row[c] += code[c];
    }
  }
  for (double& v : sample.clips.values) v = RoundToFloat(v + config.noise * rng.Normal());

  sample.queries = Matrix(k, d);
  for (std::size_t e = 0; e < k; ++e) {
    const auto code = vocab.Code(codes[e]);
    const auto ordinal = vocab.Ordinal(ranks[e]);
    auto row = sample.queries.Row(e);
    for (std::size_t c = 0; c < d; ++c) {
      row[c] = RoundToFloat(code[c] + config.context_scale * ordinal[c] +
                            config.noise * rng.Normal());
    }
    sample.spans.push_back(MomentSpan::Make(
        static_cast<double>(begins[e]) / static_cast<double>(n),
        static_cast<double>(ends[e]) / static_cast<double>(n)));
    sample.sentences.push_back("event " + std::to_string(codes[e]) +
                               " occurrence " + std::to_string(ranks[e] + 1));
  }
  sample.event_codes = std::move(codes);
  sample.event_ranks = std::move(ranks);
  return sample;
}

std::vector<GroundingSample> GenerateDataset(const GeneratorConfig& config,
                                             std::size_t n_samples,
                                             const std::string& id_prefix) {
  config.Validate();
  const SyntheticVocabulary vocab(config);
  std::vector<GroundingSample> samples;
  samples.reserve(n_samples);
  for (std::size_t i = 0; i < n_samples; ++i) {
    Rng rng = Rng::Stream(config.seed, i + 1);
    char id[32];
    std::snprintf(id, sizeof(id), "%04zu", i);
    samples.push_back(GenerateSample(config, vocab, rng, id_prefix + id));
  }
  return samples;
}

std::vector<std::size_t> SplitSubparagraphs(std::size_t k, std::size_t max_k) {
  if (k == 0 || max_k == 0) throw Error("split_subparagraphs needs k, max_k >= 1");
  std::vector<std::size_t> chunks;
  for (std::size_t left = k; left > 0;) {
    const std::size_t take = std::min(left, max_k);
    chunks.push_back(take);
    left -= take;
  }
  return chunks;
}

std::vector<std::size_t> UniformSampleIndices(std::size_t m, std::size_t n) {
  if (m == 0 || n == 0) throw Error("clip sampling needs m, n >= 1");
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    // Integer form of floor((i + 0.5) * m / n).
    idx[i] = std::min(m - 1, ((2 * i + 1) * m) / (2 * n));
  }
  return idx;
}

Matrix UniformSampleClips(const Matrix& features, std::size_t n) {
  const auto idx = UniformSampleIndices(features.rows, n);
  return features.SelectRows(idx);
}

std::vector<std::uint8_t> EncodeFeatures(const Matrix& features) {
  if (features.rows == 0 || features.cols == 0) {
    throw Error("feature matrix must have at least one row and column");
  }
  std::vector<std::uint8_t> out;
  out.reserve(kHeaderBytes + 4 * features.values.size());
  for (std::uint8_t b : kMagic) out.push_back(b);
  PutU32(out, kFeatureVersion);
  PutU32(out, static_cast<std::uint32_t>(features.rows));
  PutU32(out, static_cast<std::uint32_t>(features.cols));
  for (double v : features.values) {
    const float f = static_cast<float>(v);
    if (!std::isfinite(f)) throw Error("feature value is not finite in float32");
    PutU32(out, std::bit_cast<std::uint32_t>(f));
  }
  return out;
}

Matrix DecodeFeatures(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kHeaderBytes) {
    throw ParseError("feature file truncated at byte offset " +
                     std::to_string(bytes.size()) + " (header needs 16 bytes)");
  }
  if (!std::equal(std::begin(kMagic), std::end(kMagic), bytes.begin())) {
    throw ParseError("bad magic at byte offset 0 (expected \"PRVG\")");
  }
  const std::uint32_t version = GetU32(bytes, 4);
  if (version != kFeatureVersion) {
    throw ParseError("unsupported version " + std::to_string(version) +
                     " at byte offset 4");
  }
  const std::uint32_t rows = GetU32(bytes, 8);
  const std::uint32_t cols = GetU32(bytes, 12);
  if (rows == 0) throw ParseError("zero row count at byte offset 8");
  if (cols == 0) throw ParseError("zero column count at byte offset 12");
  const std::size_t expected =
      kHeaderBytes + 4 * static_cast<std::size_t>(rows) * cols;
  if (bytes.size() < expected) {
    throw ParseError("feature file truncated at byte offset " +
                     std::to_string(bytes.size()) + " (expected " +
                     std::to_string(expected) + " bytes)");
  }
  if (bytes.size() > expected) {
    throw ParseError("trailing data at byte offset " + std::to_string(expected));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.values.size(); ++i) {
    const std::size_t offset = kHeaderBytes + 4 * i;
    const float f = std::bit_cast<float>(GetU32(bytes, offset));
    if (!std::isfinite(f)) {
      throw ParseError("non-finite value at byte offset " + std::to_string(offset));
    }
    m.values[i] = f;
  }
  return m;
}

void WriteFeatures(const std::filesystem::path& path, const Matrix& features) {
  const auto bytes = EncodeFeatures(features);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Matrix ReadFeatures(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  try {
    return DecodeFeatures(bytes);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

std::vector<AnnotationRecord> ParseAnnotationRecords(const std::string& text) {
  nlohmann::json root;
  try {
    root = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(std::string("annotation file is not valid JSON: ") + e.what());
  }
  if (!root.is_array()) throw ParseError("annotation file must hold a JSON array");
  std::vector<AnnotationRecord> records;
  for (std::size_t i = 0; i < root.size(); ++i) {
    const auto& r = root[i];
    if (!r.is_object()) throw ParseError("annotation record " + std::to_string(i) + " is not an object");
    AnnotationRecord rec;
    if (!r.contains("video_id") || !r["video_id"].is_string()) {
      throw ParseError(ParseContext(i, "video_id") + ": missing or not a string");
    }
    rec.video_id = r["video_id"].get<std::string>();
    if (!r.contains("duration") || !r["duration"].is_number()) {
      throw ParseError(ParseContext(i, "duration") + ": missing or not a number");
    }
    rec.duration = r["duration"].get<double>();
    if (!(rec.duration > 0.0)) {
      throw ParseError(ParseContext(i, "duration") + ": must be positive");
    }
    if (!r.contains("queries") || !r["queries"].is_array()) {
      throw ParseError(ParseContext(i, "queries") + ": missing or not an array");
    }
    const auto& qs = r["queries"];
    for (std::size_t j = 0; j < qs.size(); ++j) {
      const auto& q = qs[j];
      const std::string where = "queries[" + std::to_string(j) + "]";
      if (!q.is_object()) throw ParseError(ParseContext(i, where) + ": not an object");
      AnnotationQuery aq;
      for (const char* key : {"start", "end"}) {
        if (!q.contains(key) || !q[key].is_number()) {
          throw ParseError(ParseContext(i, where + "." + key) +
                           ": missing or not a number");
        }
      }
      aq.start = q["start"].get<double>();
      aq.end = q["end"].get<double>();
      if (q.contains("sentence")) {
        if (!q["sentence"].is_string()) {
          throw ParseError(ParseContext(i, where + ".sentence") + ": not a string");
        }
        aq.sentence = q["sentence"].get<std::string>();
      }
      rec.queries.push_back(std::move(aq));
    }
    records.push_back(std::move(rec));
  }
  return records;
}

std::vector<AnnotationRecord> ReadAnnotationRecords(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  try {
    return ParseAnnotationRecords(buffer.str());
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void WriteAnnotationRecords(const std::filesystem::path& path,
                            std::span<const AnnotationRecord> records) {
  nlohmann::json root = nlohmann::json::array();
  for (const auto& rec : records) {
    nlohmann::json r;
    r["video_id"] = rec.video_id;
    r["duration"] = rec.duration;
    nlohmann::json qs = nlohmann::json::array();
    for (const auto& q : rec.queries) {
      nlohmann::json jq;
      if (!q.sentence.empty()) jq["sentence"] = q.sentence;
      jq["start"] = q.start;
      jq["end"] = q.end;
      qs.push_back(std::move(jq));
    }
    r["queries"] = std::move(qs);
    root.push_back(std::move(r));
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << root.dump(1) << '\n';
  if (!out) throw Error("failed writing " + path.string());
}

MomentSpan NormalizeSpan(double start, double end, double duration) {
  if (!(duration > 0.0)) throw Error("duration must be positive");
  if (start > end) {
    std::ostringstream os;
    os << "span start " << start << "s exceeds end " << end << "s";
    throw Error(os.str());
  }
  const double s = std::clamp(start, 0.0, duration);
  const double e = std::clamp(end, 0.0, duration);
  return MomentSpan::Make(s / duration, e / duration);
}

std::vector<NormalizedAnnotation> NormalizeAnnotations(
    std::span<const AnnotationRecord> records) {
  std::vector<NormalizedAnnotation> out;
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto& rec = records[i];
    NormalizedAnnotation ann;
    ann.video_id = rec.video_id;
    ann.duration = rec.duration;
    for (std::size_t j = 0; j < rec.queries.size(); ++j) {
      try {
        ann.spans.push_back(
            NormalizeSpan(rec.queries[j].start, rec.queries[j].end, rec.duration));
      } catch (const Error& e) {
        throw ParseError(ParseContext(i, "queries[" + std::to_string(j) + "]") +
                         ": " + e.what());
      }
      ann.sentences.push_back(rec.queries[j].sentence);
    }
    out.push_back(std::move(ann));
  }
  return out;
}

std::vector<NormalizedAnnotation> ReadAnnotations(
    const std::filesystem::path& path) {
  const auto records = ReadAnnotationRecords(path);
  try {
    return NormalizeAnnotations(records);
  } catch (const ParseError& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

AnnotationRecord ToAnnotationRecord(const GroundingSample& sample) {
  AnnotationRecord rec;
  rec.video_id = sample.video_id;
  rec.duration = sample.duration;
  for (std::size_t i = 0; i < sample.spans.size(); ++i) {
    AnnotationQuery q;
    if (!sample.sentences.empty()) q.sentence = sample.sentences[i];
    q.start = sample.spans[i].start * sample.duration;
    q.end = sample.spans[i].end * sample.duration;
    rec.queries.push_back(std::move(q));
  }
  return rec;
}

void WriteDataset(const std::filesystem::path& dir,
                  std::span<const GroundingSample> samples) {
  std::filesystem::create_directories(dir / "features");
  std::filesystem::create_directories(dir / "sentences");
  std::vector<AnnotationRecord> records;
  for (const auto& s : samples) {
    WriteFeatures(dir / "features" / (s.video_id + ".feat"), s.clips);
    WriteFeatures(dir / "sentences" / (s.video_id + ".feat"), s.queries);
    records.push_back(ToAnnotationRecord(s));
  }
  WriteAnnotationRecords(dir / "annotations.json", records);
}

std::vector<GroundingSample> LoadDataset(const std::filesystem::path& dir) {
  const auto annotations = ReadAnnotations(dir / "annotations.json");
  std::vector<GroundingSample> samples;
  for (const auto& ann : annotations) {
    GroundingSample s;
    s.video_id = ann.video_id;
    s.duration = ann.duration;
    s.spans = ann.spans;
    if (std::any_of(ann.sentences.begin(), ann.sentences.end(),
                    [](const std::string& t) { return !t.empty(); })) {
      s.sentences = ann.sentences;
    }
    s.clips = ReadFeatures(dir / "features" / (ann.video_id + ".feat"));
    s.queries = ReadFeatures(dir / "sentences" / (ann.video_id + ".feat"));
    s.Validate();
    samples.push_back(std::move(s));
  }
  if (samples.empty()) throw Error(dir.string() + ": dataset has no videos");
  return samples;
}

}  // namespace densevg
