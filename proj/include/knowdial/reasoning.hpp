#pragma once

#include <string>
#include <vector>

#include "knowdial/ops.hpp"
#include "knowdial/tensor.hpp"

namespace knowdial {

struct InjectionParams {
  Tensor attn_proj;  // [d_h, 3*d_h] over [question, target, source]
  Tensor attn_vec;   // [d_h]
  Tensor out_proj;   // [d_h, 2*d_h] over [target, message]

  InjectionParams() = default;
  InjectionParams(int d_h, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;
};

struct InjectedNodes {
  std::vector<Tensor> nodes;               // one per target, dim d_h
  std::vector<std::vector<double>> gamma;  // targets x sources attention
};

// Additive cross-structure attention: each target attends over all
// sources, pools a message, and is re-projected together with it.
// Swapping the target/source arguments gives the reverse direction with
// the same parameter set.
InjectedNodes cross_graph_inject(Tape& tape, const Tensor& question,
                                 const std::vector<Tensor>& targets,
                                 const std::vector<Tensor>& sources,
                                 const InjectionParams& params);

struct AggregatorParams {
  Tensor fact_proj;  // [d_h, d_h]
  Tensor attn_vec;   // [d_h]
  Tensor out_proj;   // [d_h, 2*d_h] over [target, fact summary]

  AggregatorParams() = default;
  AggregatorParams(int d_h, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;
};

struct AggregatedFeatures {
  std::vector<Tensor> features;  // one per target, dim d_h
  std::vector<double> delta;     // single attention over facts
  Tensor fact_summary;           // delta-weighted fact pool [d_h]
};

// One question-gated attention over the facts, shared by every target;
// each output concatenates the target with the pooled fact summary and
// projects back to d_h (linear, as in the update equation).
AggregatedFeatures aggregate(Tape& tape, const Tensor& question,
                             const std::vector<Tensor>& facts,
                             const std::vector<Tensor>& targets,
                             const AggregatorParams& params);

struct PurifyParams {
  Tensor proj;      // [d_h, d_h]
  Tensor attn_vec;  // [d_h]

  PurifyParams() = default;
  PurifyParams(int d_h, Rng& rng);

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;
};

struct PurifiedSentences {
  std::vector<Tensor> sentences;  // each input scaled by its weight
  std::vector<double> eta;
};

// Question-gated relevance weights over a sentence list; each sentence is
// scaled by its weight (not pooled -- pooling happens downstream).
PurifiedSentences question_guided_purify(Tape& tape, const Tensor& question,
                                         const std::vector<Tensor>& sentences,
                                         const PurifyParams& params);

struct HistoryFactParams {
  PurifyParams purify_history;
  PurifyParams purify_facts;
  InjectionParams injection;
  AggregatorParams aggregator;

  HistoryFactParams() = default;
  HistoryFactParams(int d_h, Rng& rng);
};

struct HistoryFactResult {
  std::vector<Tensor> features;            // per history round, dim d_h
  std::vector<double> eta_history;
  std::vector<double> eta_facts;
  std::vector<std::vector<double>> gamma_history_over_facts;
  std::vector<std::vector<double>> gamma_facts_over_history;
  std::vector<double> delta;
  std::vector<Tensor> injected_history;    // facts-injected rounds
};

struct HistoryFactOptions {
  bool use_purification = true;
  bool use_injection = true;
  bool use_aggregator = true;
};

// Textual twin of the graph pipeline: purify both sentence lists, inject
// in both directions treating sentences as edge-free nodes, then pool the
// history-injected facts against each purified round.
HistoryFactResult history_fact_pipeline(Tape& tape, const Tensor& question,
                                        const std::vector<Tensor>& history,
                                        const std::vector<Tensor>& facts,
                                        const HistoryFactParams& params,
                                        const HistoryFactOptions& options = {});

}  // namespace knowdial
