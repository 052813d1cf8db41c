#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "knowdial/knowledge.hpp"

namespace knowdial {

struct DialogRound {
  std::vector<std::string> question;
  std::vector<std::string> answer;

  bool operator==(const DialogRound&) const = default;
};

struct DialogInstance {
  std::string image_id;
  std::vector<std::string> caption;
  std::vector<DialogRound> rounds;  // completed rounds before this one
  std::vector<std::string> question;
  std::vector<std::vector<std::string>> candidates;
  int gt_index = 0;
  std::vector<double> relevance;  // empty when absent

  bool operator==(const DialogInstance&) const = default;
};

struct ImageFeatures {
  int n = 0;
  int dim = 0;
  std::vector<double> features;          // n x dim row-major
  std::vector<std::string> labels;       // n concept words
  std::vector<std::vector<double>> relations;  // optional n*n rows of d_r
  int relation_dim = 0;
};

using FeatureMap = std::map<std::string, ImageFeatures>;

// JSON Lines, one instance per line; text fields hold space-joined
// tokens. Schema errors name the instance and field.
std::vector<DialogInstance> load_dataset(const std::string& path);
void save_dataset(const std::string& path,
                  const std::vector<DialogInstance>& instances);

// Feature sidecars: a JSON form for small fixtures and a binary form
// (magic "KDVF", little-endian u32 header fields, float64 blocks).
FeatureMap load_features(const std::string& path);
void save_features_json(const std::string& path, const FeatureMap& features);
void save_features_binary(const std::string& path, const FeatureMap& features);

struct MetricsReport {
  double mrr = 0.0;
  double r_at_1 = 0.0;
  double r_at_5 = 0.0;
  double r_at_10 = 0.0;
  double mean_rank = 0.0;
  double ndcg = 0.0;
  int instances = 0;
  bool has_ndcg = false;
};

// gt_ranks are 1-based. When relevance_in_rank_order is given, entry i
// lists each candidate's relevance in the model's ranked order for
// instance i; NDCG uses the cut-off k = count of relevant candidates.
MetricsReport compute_metrics(
    const std::vector<int>& gt_ranks,
    const std::vector<std::vector<double>>* relevance_in_rank_order = nullptr);

struct GeneratorSpec {
  int n_images = 8;
  int n_rounds = 10;
  int n_candidates = 100;
  int n_objects = 4;
  int feature_dim = 16;
  // vision / history / commonsense sampling weights
  double ratio_vision = 0.4;
  double ratio_history = 0.3;
  double ratio_commonsense = 0.3;
  // When true, every question is commonsense-kind over the held-out
  // object pool (the split used to probe generalization).
  bool heldout_commonsense = false;
};

struct SyntheticDataset {
  std::vector<DialogInstance> instances;
  std::vector<FactTriple> store;
  FeatureMap features;
  std::vector<std::string> kinds;  // per instance: vision|history|commonsense
};

// Deterministic from the seed. The underlying "world" (object pools,
// object->location facts, visual feature codebook) is fixed across seeds
// so that independently generated datasets stay mutually consistent.
SyntheticDataset generate_synthetic_dataset(std::uint64_t seed,
                                            const GeneratorSpec& spec);

// World introspection used by tests and the evaluation harness.
const std::vector<std::string>& generator_object_pool();
const std::vector<std::string>& generator_heldout_objects();
const std::vector<std::string>& generator_location_pool();
std::string generator_home_location(const std::string& object);

}  // namespace knowdial
