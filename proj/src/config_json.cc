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

#include "config_json.h"

#include <bit>
#include <fstream>
#include <iterator>

namespace densevg {

void to_json(nlohmann::json& j, const ModelConfig& c) {
  j = {{"video_dim", c.video_dim},
       {"query_dim", c.query_dim},
       {"d_model", c.d_model},
       {"n_heads", c.n_heads},
       {"n_enc_layers", c.n_enc_layers},
       {"n_dec_layers", c.n_dec_layers},
       {"ffn_dim", c.ffn_dim},
       {"dropout", c.dropout},
       {"max_clips", c.max_clips},
       {"max_queries", c.max_queries},
       {"positional_encoding", c.positional_encoding},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, ModelConfig& c) {
  j.at("video_dim").get_to(c.video_dim);
  j.at("query_dim").get_to(c.query_dim);
  j.at("d_model").get_to(c.d_model);
  j.at("n_heads").get_to(c.n_heads);
  j.at("n_enc_layers").get_to(c.n_enc_layers);
  j.at("n_dec_layers").get_to(c.n_dec_layers);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("dropout").get_to(c.dropout);
  j.at("max_clips").get_to(c.max_clips);
  j.at("max_queries").get_to(c.max_queries);
  j.at("positional_encoding").get_to(c.positional_encoding);
  j.at("seed").get_to(c.seed);
}

void to_json(nlohmann::json& j, const GeneratorConfig& c) {
  j = {{"n_clips", c.n_clips},
       {"feature_dim", c.feature_dim},
       {"min_events", c.min_events},
       {"max_events", c.max_events},
       {"min_span_clips", c.min_span_clips},
       {"vocab_size", c.vocab_size},
       {"noise", c.noise},
       {"ambiguity", c.ambiguity},
       {"context_scale", c.context_scale},
       {"drift_scale", c.drift_scale},
       {"vocab_seed", c.vocab_seed},
       {"seed", c.seed}};
}

void from_json(const nlohmann::json& j, GeneratorConfig& c) {
  j.at("n_clips").get_to(c.n_clips);
  j.at("feature_dim").get_to(c.feature_dim);
  j.at("min_events").get_to(c.min_events);
  j.at("max_events").get_to(c.max_events);
  j.at("min_span_clips").get_to(c.min_span_clips);
  j.at("vocab_size").get_to(c.vocab_size);
  j.at("noise").get_to(c.noise);
  j.at("ambiguity").get_to(c.ambiguity);
  j.at("context_scale").get_to(c.context_scale);
  j.at("drift_scale").get_to(c.drift_scale);
  j.at("vocab_seed").get_to(c.vocab_seed);
  j.at("seed").get_to(c.seed);
}

void to_json(nlohmann::json& j, const TrainConfig& c) {
  j = {{"learning_rate", c.learning_rate},
       {"batch_size", c.batch_size},
       {"epochs", c.epochs},
       {"lambda", c.weights.lambda},
       {"beta", c.weights.beta},
       {"attention_loss", ToString(c.attention_loss)},
       {"iou_loss", ToString(c.iou_loss)},
       {"seed", c.seed},
       {"k_min", c.k_min},
       {"k_max", c.k_max},
       {"query_mode", ToString(c.query_mode)},
       {"thresholds", c.thresholds},
       {"warmup_steps", c.warmup_steps},
       {"adam_beta1", c.adam_beta1},
       {"adam_beta2", c.adam_beta2},
       {"adam_eps", c.adam_eps}};
}

void from_json(const nlohmann::json& j, TrainConfig& c) {
  j.at("learning_rate").get_to(c.learning_rate);
  j.at("batch_size").get_to(c.batch_size);
  j.at("epochs").get_to(c.epochs);
  j.at("lambda").get_to(c.weights.lambda);
  j.at("beta").get_to(c.weights.beta);
  c.attention_loss = ParseAttentionLossKind(j.at("attention_loss").get<std::string>());
  c.iou_loss = ParseIouLossKind(j.at("iou_loss").get<std::string>());
  j.at("seed").get_to(c.seed);
  j.at("k_min").get_to(c.k_min);
  j.at("k_max").get_to(c.k_max);
  c.query_mode = ParseQueryMode(j.at("query_mode").get<std::string>());
  j.at("thresholds").get_to(c.thresholds);
  j.at("warmup_steps").get_to(c.warmup_steps);
  j.at("adam_beta1").get_to(c.adam_beta1);
  j.at("adam_beta2").get_to(c.adam_beta2);
  j.at("adam_eps").get_to(c.adam_eps);
}

namespace {

std::filesystem::path WithSuffix(const std::filesystem::path& base,
                                 const char* suffix) {
  return std::filesystem::path(base.string() + suffix);
}

}  // namespace

void SaveCheckpoint(const GroundingModel& model,
                    const std::filesystem::path& base) {
  nlohmann::json manifest;
  manifest["format"] = "densevg-checkpoint";
  manifest["version"] = 1;
  manifest["config"] = model.config();
  manifest["blob"] = WithSuffix(base, ".bin").filename().string();
  nlohmann::json params = nlohmann::json::array();
  std::vector<std::uint8_t> blob;
  for (const auto& [name, tensor] : model.parameters()) {
    params.push_back({{"name", name}, {"shape", tensor.shape()}});
    for (double v : tensor.data()) {
      const auto bits = std::bit_cast<std::uint64_t>(v);
      for (int i = 0; i < 8; ++i) blob.push_back(static_cast<std::uint8_t>(bits >> (8 * i)));
    }
  }
  manifest["parameters"] = std::move(params);

  if (base.has_parent_path()) std::filesystem::create_directories(base.parent_path());
  std::ofstream json_out(WithSuffix(base, ".json"), std::ios::trunc);
  if (!json_out) throw Error("cannot write checkpoint manifest " + base.string() + ".json");
  json_out << manifest.dump(2) << '\n';
  std::ofstream bin_out(WithSuffix(base, ".bin"), std::ios::binary | std::ios::trunc);
  if (!bin_out) throw Error("cannot write checkpoint blob " + base.string() + ".bin");
  bin_out.write(reinterpret_cast<const char*>(blob.data()),
                static_cast<std::streamsize>(blob.size()));
  if (!json_out || !bin_out) throw Error("failed writing checkpoint " + base.string());
}

GroundingModel LoadCheckpoint(const std::filesystem::path& base) {
  const auto manifest_path = WithSuffix(base, ".json");
  std::ifstream json_in(manifest_path);
  if (!json_in) throw Error("cannot open checkpoint manifest " + manifest_path.string());
  nlohmann::json manifest;
  try {
    manifest = nlohmann::json::parse(json_in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": " + e.what());
  }
  if (manifest.value("format", "") != "densevg-checkpoint" ||
      manifest.value("version", 0) != 1) {
    throw ParseError(manifest_path.string() + ": not a version-1 checkpoint manifest");
  }
  ModelConfig config;
  try {
    config = manifest.at("config").get<ModelConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(manifest_path.string() + ": bad config: " + e.what());
  }
  GroundingModel model(config);

  const auto blob_path = WithSuffix(base, ".bin");
  std::ifstream bin_in(blob_path, std::ios::binary);
  if (!bin_in) throw Error("cannot open checkpoint blob " + blob_path.string());
  const std::vector<std::uint8_t> blob((std::istreambuf_iterator<char>(bin_in)),
                                       std::istreambuf_iterator<char>());
  const auto& params = manifest.at("parameters");
  if (params.size() != model.parameters().size()) {
    throw ParseError(manifest_path.string() + ": parameter count differs from config");
  }
  std::size_t offset = 0, index = 0;
  for (auto& [name, tensor] : model.parameters()) {
    const auto& entry = params[index++];
    if (entry.at("name").get<std::string>() != name ||
        entry.at("shape").get<Shape>() != tensor.shape()) {
      throw ParseError(manifest_path.string() + ": parameter '" + name +
                       "' missing or reshaped");
    }
    auto data = tensor.mutable_data();
    if (offset + 8 * data.size() > blob.size()) {
      throw ParseError(blob_path.string() + ": truncated at byte offset " +
                       std::to_string(blob.size()));
    }
    for (double& v : data) {
      std::uint64_t bits = 0;
      for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(blob[offset + i]) << (8 * i);
      v = std::bit_cast<double>(bits);
      offset += 8;
    }
  }
  if (offset != blob.size()) {
    throw ParseError(blob_path.string() + ": trailing data at byte offset " +
                     std::to_string(offset));
  }
  return model;
}

}  // namespace densevg
