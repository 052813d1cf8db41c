#pragma once

#include <optional>
#include <string>
#include <vector>

#include "knowdial/data.hpp"
#include "knowdial/fusion.hpp"
#include "knowdial/knowledge.hpp"
#include "knowdial/reasoning.hpp"
#include "knowdial/text.hpp"
#include "knowdial/vision.hpp"

namespace knowdial {

struct ModelConfig {
  int d_emb = 300;
  int d_h = 512;
  int d_v = 2048;
  int d_r = 0;  // relation feature dim; 0 learns edges from node pairs
  int heads = 4;
  int k_facts = 100;
  int max_len = 20;
  double dropout = 0.5;
  std::string mode = "disc";  // disc | gen | both

  // Ablation switches; all on for the full model.
  bool use_sentence_facts = true;
  bool use_graph_facts = true;
  bool use_purification = true;
  bool use_injection = true;
  bool use_aggregator = true;
  bool question_in_gcn = true;
  bool share_text_encoders = false;
  bool gen_length_normalize = false;

  bool wants_disc() const { return mode == "disc" || mode == "both"; }
  bool wants_gen() const { return mode == "gen" || mode == "both"; }
};

struct NamedParam {
  std::string name;
  Tensor tensor;

  std::string group() const { return name.substr(0, name.find('.')); }
};

/// Instance with everything resolved for a forward pass: token ids, raw
/// visual features, and the retrieved candidate facts. Retrieval happens
/// here, once, against the embedding values at preparation time, so a
/// prepared instance is a fixed input to the differentiable path.
struct PreparedInstance {
  std::string image_id;
  int index = 0;
  std::vector<int> question_ids;
  std::vector<std::vector<int>> history_ids;  // caption first, then rounds
  std::vector<std::vector<int>> candidate_ids;
  int gt_index = 0;
  std::vector<double> relevance;
  std::vector<std::string> question_tokens;
  std::vector<std::string> gt_tokens;
  Tensor object_features;                  // [N, d_v]
  std::vector<Tensor> relation_features;   // N*N rows of [d_r]; may be empty
  CandidateFactSet facts;                  // empty when both fact paths are off
};

struct TraceDetail {
  std::vector<std::string> fact_strings;
  std::vector<std::string> entity_labels;
  std::vector<std::vector<double>> gamma_vision_over_entities;
  std::vector<std::vector<double>> gamma_entities_over_vision;
  std::vector<std::vector<double>> gamma_history_over_facts;
  std::vector<std::vector<double>> gamma_facts_over_history;
  std::vector<double> delta_entities;
  std::vector<double> delta_facts;
  std::vector<double> eta_facts;
  std::vector<double> eta_history;
  std::vector<std::vector<double>> gcn_alpha_vision;
  std::vector<std::vector<double>> gcn_alpha_facts;
  FusionBlock::Detail fusion;
};

struct ForwardResult {
  Tensor loss;         // per configured mode; sum when mode == both
  Tensor disc_loss;    // defined when the mode wants it
  Tensor gen_loss;     // defined when the mode wants it
  Tensor disc_scores;  // defined when the mode wants it
};

struct InstanceScores {
  std::vector<double> disc;  // empty unless the mode wants it
  std::vector<double> gen;
};

class Model {
 public:
  Model(ModelConfig config, Vocabulary vocab, RelationVocab relations,
        Rng& rng);

  const ModelConfig& config() const { return config_; }
  const Vocabulary& vocab() const { return vocab_; }
  const RelationVocab& relations() const { return relations_; }

  std::vector<NamedParam> parameters() const;
  std::vector<std::string> parameter_groups() const;
  void zero_grads() const;

  PreparedInstance prepare(const DialogInstance& instance,
                           const ImageFeatures& features,
                           const std::vector<FactTriple>& store) const;

  // Training-mode loss for the configured decoders. Dropout draws come
  // from `rng` when training is true.
  ForwardResult forward(Tape& tape, const PreparedInstance& inst,
                        bool training, Rng* rng,
                        TraceDetail* trace = nullptr) const;

  // Deterministic candidate scores for ranking; runs without gradient
  // tracking.
  InstanceScores score(const PreparedInstance& inst) const;

 private:
  struct FusedState {
    Tensor question;
    Tensor fused;
  };
  FusedState encode_and_fuse(Tape& tape, const PreparedInstance& inst,
                             bool training, Rng* rng,
                             TraceDetail* trace) const;

  Tensor encode_with(const RecurrentEncoder& enc, Tape& tape,
                     std::span<const int> ids) const;

  const RecurrentEncoder& history_encoder() const {
    return config_.share_text_encoders ? enc_question_ : enc_history_;
  }
  const RecurrentEncoder& fact_encoder() const {
    return config_.share_text_encoders ? enc_question_ : enc_fact_;
  }

  ModelConfig config_;
  Vocabulary vocab_;
  RelationVocab relations_;

  EmbeddingTable embedding_;
  RecurrentEncoder enc_question_, enc_history_, enc_fact_;
  FactGraphParams fact_graph_;
  VisualGraphParams visual_;
  GcnParams gcn_vision_, gcn_fact_;
  InjectionParams inject_vision_;
  AggregatorParams agg_vision_;
  HistoryFactParams history_;
  FusionBlock fusion_;
  GenerativeDecoder gen_decoder_;
};

struct GroupCheck {
  std::string group;
  double max_rel_error = 0.0;
  int n_components = 0;
};

// Central-difference check of every parameter group against the
// accumulated analytic gradients of the configured loss on one instance.
std::vector<GroupCheck> gradcheck_model(const Model& model,
                                        const PreparedInstance& inst,
                                        double eps = 1e-5);

}  // namespace knowdial
