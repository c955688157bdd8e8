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

// Dense-grounding samples: synthetic generation with planted ground truth,
// precomputed-feature files, annotation files and clip resampling.
//
// Feature file layout (all little-endian):
//   bytes 0..3   magic "PRVG"
//   bytes 4..7   uint32 version (1)
//   bytes 8..11  uint32 rows
//   bytes 12..15 uint32 cols
//   then rows*cols float32 values, row-major.
//
// Annotation and prediction files are JSON arrays of records
//   {"video_id": str, "duration": seconds,
//    "queries": [{"sentence": str (optional), "start": s, "end": s}, ...]}
// with queries in paragraph order.
//
// A dataset directory holds annotations.json, features/<video_id>.feat
// (N x d clip features) and sentences/<video_id>.feat (K x d sentence
// features, one row per annotation query).

#ifndef DENSEVG_DATA_H_
#define DENSEVG_DATA_H_

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "densevg/matrix.h"
#include "densevg/moment.h"
#include "densevg/random.h"

namespace densevg {

struct GroundingSample {
  std::string video_id;
  double duration = 0.0;  // seconds
  Matrix clips;           // N x d_video
  Matrix queries;         // K x d_query, paragraph order
  std::vector<MomentSpan> spans;
  std::vector<std::string> sentences;  // optional, may be empty
  // Synthetic generator metadata; empty for loaded data.
  std::vector<std::size_t> event_codes;
  std::vector<std::size_t> event_ranks;

  std::size_t num_queries() const { return spans.size(); }

  // Checks alignment of queries, spans and optional metadata, finiteness of
  // features and validity of spans.
  void Validate() const;

  // Sentences at the given indices (in that order), spans kept aligned.
  GroundingSample SelectQueries(std::span<const std::size_t> indices) const;
};

struct GeneratorConfig {
  std::size_t n_clips = 32;
  std::size_t feature_dim = 32;
  std::size_t min_events = 2;
  std::size_t max_events = 8;
  std::size_t min_span_clips = 3;
  std::size_t vocab_size = 16;
  double noise = 0.1;          // per-entry Gaussian stddev
  double ambiguity = 0.5;      // probability an event reuses a code
  double context_scale = 0.5;  // ordinal context vector weight in queries
  double drift_scale = 0.5;    // background drift at the last clip
  std::uint64_t vocab_seed = 0;
  std::uint64_t seed = 0;

  void Validate() const;
};

// Fixed directions shared by every sample drawn with the same vocab_seed:
// one embedding per event code, one ordinal context vector per rank, and a
// background direction. When they fit in the feature width they are
// mutually orthogonal; every vector has norm sqrt(feature_dim).
class SyntheticVocabulary {
 public:
  explicit SyntheticVocabulary(const GeneratorConfig& config);

  std::span<const double> Code(std::size_t code) const;
  std::span<const double> Ordinal(std::size_t rank) const;
  // Background drift of clip i among n: drift_scale * i/(n-1) * direction.
  std::vector<double> Background(std::size_t clip, std::size_t n_clips) const;

  std::size_t vocab_size() const { return codes_.rows; }

 private:
  Matrix codes_;
  Matrix ordinals_;
  std::vector<double> background_;
  double drift_scale_;
};

// Draws one paragraph of K ordered, non-overlapping, clip-aligned events.
// Clip feature = code + drift + noise inside an event, drift + noise
// outside. Query = code + context_scale * ordinal(rank among same-code
// events) + noise. Features are rounded to float32 precision so they survive
// a feature-file round trip unchanged.
GroundingSample GenerateSample(const GeneratorConfig& config,
                               const SyntheticVocabulary& vocab, Rng& rng,
                               std::string video_id);

// Sample i uses its own stream derived from (seed, i); ids are
// "<prefix><i, 4 digits>".
std::vector<GroundingSample> GenerateDataset(const GeneratorConfig& config,
                                             std::size_t n_samples,
                                             const std::string& id_prefix = "v");

// Greedy chunk sizes of at most max_k, in order.
std::vector<std::size_t> SplitSubparagraphs(std::size_t k, std::size_t max_k = 8);

// Indices floor((i + 0.5) * m / n) for i in [0, n).
std::vector<std::size_t> UniformSampleIndices(std::size_t m, std::size_t n);
Matrix UniformSampleClips(const Matrix& features, std::size_t n);

void WriteFeatures(const std::filesystem::path& path, const Matrix& features);
Matrix ReadFeatures(const std::filesystem::path& path);
// Decodes an in-memory feature file; errors carry the byte offset.
Matrix DecodeFeatures(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> EncodeFeatures(const Matrix& features);

struct AnnotationQuery {
  std::string sentence;
  double start = 0.0;  // seconds
  double end = 0.0;
};

struct AnnotationRecord {
  std::string video_id;
  double duration = 0.0;
  std::vector<AnnotationQuery> queries;
};

std::vector<AnnotationRecord> ReadAnnotationRecords(
    const std::filesystem::path& path);
std::vector<AnnotationRecord> ParseAnnotationRecords(const std::string& text);
void WriteAnnotationRecords(const std::filesystem::path& path,
                            std::span<const AnnotationRecord> records);

// Clamps to [0, duration] and divides by duration. Rejects start > end.
MomentSpan NormalizeSpan(double start, double end, double duration);

struct NormalizedAnnotation {
  std::string video_id;
  double duration = 0.0;
  std::vector<MomentSpan> spans;
  std::vector<std::string> sentences;
};

std::vector<NormalizedAnnotation> NormalizeAnnotations(
    std::span<const AnnotationRecord> records);
std::vector<NormalizedAnnotation> ReadAnnotations(
    const std::filesystem::path& path);

AnnotationRecord ToAnnotationRecord(const GroundingSample& sample);

// Dataset directory I/O (layout in the file comment).
void WriteDataset(const std::filesystem::path& dir,
                  std::span<const GroundingSample> samples);
std::vector<GroundingSample> LoadDataset(const std::filesystem::path& dir);

}  // namespace densevg

#endif  // DENSEVG_DATA_H_
