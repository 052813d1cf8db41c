#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

#include "knowdial/model.hpp"

namespace knowdial {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Flat dotted-key run configuration. Defaults follow the published
/// training recipe; desk-scale configs shrink the dims.
struct RunConfig {
  // model.*
  int d_emb = 300;
  int d_h = 512;
  int d_v = 2048;
  int d_r = 0;
  int heads = 4;
  // sizes.*
  int k_facts = 100;
  int n_objects = 36;
  int max_len = 20;
  int candidates = 100;
  // optimizer.*
  double lr_init = 4e-3;
  double lr_final = 5e-5;
  int epochs = 16;
  int batch = 15;
  double dropout = 0.5;
  int min_freq = 5;
  // paths.*
  std::string dataset;
  std::string val_dataset;
  std::string triples;
  std::string features;
  std::string checkpoint;
  std::string log;
  // run.*
  std::uint64_t seed = 1;
  std::string mode = "disc";
  // ablation.*
  bool use_sentence_facts = true;
  bool use_graph_facts = true;
  bool use_purification = true;
  bool use_injection = true;
  bool use_aggregator = true;
  bool question_in_gcn = true;
  bool share_text_encoders = false;
  bool gen_length_normalize = false;

  bool operator==(const RunConfig&) const = default;

  void validate() const;
  ModelConfig model_config() const;
};

// "key = value" lines, '#' comments, keys as listed in serialize_config.
RunConfig parse_config_text(const std::string& text);
RunConfig parse_config_file(const std::string& path);
std::string serialize_config(const RunConfig& config);

// Single-key override (the CLI flag / env-var hook). Unknown keys throw.
void apply_override(RunConfig& config, const std::string& key,
                    const std::string& value);

}  // namespace knowdial
