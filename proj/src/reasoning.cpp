#include "knowdial/reasoning.hpp"

#include <cmath>

namespace knowdial {

namespace {

Tensor init_weight(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

Tensor init_vec(int n, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(n));
  return Tensor::uniform({n}, -bound, bound, rng, true);
}

void check_dim(const char* where, const Tensor& t, int d_h) {
  if (t.shape() != Shape{d_h}) {
    throw ShapeError(std::string(where) + ": feature of shape " +
                     shape_str(t.shape()) + " does not match dim " +
                     std::to_string(d_h));
  }
}

}  // namespace

InjectionParams::InjectionParams(int d_h, Rng& rng)
    : attn_proj(init_weight(d_h, 3 * d_h, rng)),
      attn_vec(init_vec(d_h, rng)),
      out_proj(init_weight(d_h, 2 * d_h, rng)) {}

std::vector<Tensor> InjectionParams::parameters() const {
  return {attn_proj, attn_vec, out_proj};
}

std::vector<std::string> InjectionParams::parameter_names(
    const std::string& prefix) const {
  return {prefix + ".attn_proj", prefix + ".attn_vec", prefix + ".out_proj"};
}

InjectedNodes cross_graph_inject(Tape& tape, const Tensor& question,
                                 const std::vector<Tensor>& targets,
                                 const std::vector<Tensor>& sources,
                                 const InjectionParams& params) {
  if (sources.empty()) {
    throw ShapeError("inject: no source nodes");
  }
  if (targets.empty()) {
    throw ShapeError("inject: no target nodes");
  }
  const int d_h = params.attn_vec.dim(0);
  check_dim("inject", question, d_h);
  for (const Tensor& t : targets) check_dim("inject", t, d_h);
  for (const Tensor& s : sources) check_dim("inject", s, d_h);

  Tensor source_matrix = ops::stack_rows(tape, sources);

  InjectedNodes out;
  out.nodes.reserve(targets.size());
  out.gamma.reserve(targets.size());
  for (const Tensor& target : targets) {
    std::vector<Tensor> logits;
    logits.reserve(sources.size());
    for (const Tensor& source : sources) {
      Tensor cat = ops::concat(tape, {question, target, source});
      logits.push_back(ops::matmul(
          tape, params.attn_vec,
          ops::tanh(tape, ops::matmul(tape, params.attn_proj, cat))));
    }
    Tensor gamma = ops::softmax(tape, ops::concat(tape, logits), 0);
    out.gamma.push_back(gamma.values());
    Tensor message = ops::matmul(tape, gamma, source_matrix);
    out.nodes.push_back(ops::tanh(
        tape, ops::matmul(tape, params.out_proj,
                          ops::concat(tape, {target, message}))));
  }
  return out;
}

AggregatorParams::AggregatorParams(int d_h, Rng& rng)
    : fact_proj(init_weight(d_h, d_h, rng)),
      attn_vec(init_vec(d_h, rng)),
      out_proj(init_weight(d_h, 2 * d_h, rng)) {}

std::vector<Tensor> AggregatorParams::parameters() const {
  return {fact_proj, attn_vec, out_proj};
}

std::vector<std::string> AggregatorParams::parameter_names(
    const std::string& prefix) const {
  return {prefix + ".fact_proj", prefix + ".attn_vec", prefix + ".out_proj"};
}

AggregatedFeatures aggregate(Tape& tape, const Tensor& question,
                             const std::vector<Tensor>& facts,
                             const std::vector<Tensor>& targets,
                             const AggregatorParams& params) {
  if (facts.empty()) {
    throw ShapeError("aggregate: no fact nodes");
  }
  const int d_h = params.attn_vec.dim(0);
  check_dim("aggregate", question, d_h);

  std::vector<Tensor> logits;
  logits.reserve(facts.size());
  for (const Tensor& fact : facts) {
    check_dim("aggregate", fact, d_h);
    Tensor gated = ops::hadamard(tape, question,
                                 ops::matmul(tape, params.fact_proj, fact));
    logits.push_back(ops::matmul(tape, params.attn_vec, gated));
  }
  Tensor delta = ops::softmax(tape, ops::concat(tape, logits), 0);

  AggregatedFeatures out;
  out.delta = delta.values();
  out.fact_summary = ops::matmul(tape, delta, ops::stack_rows(tape, facts));
  out.features.reserve(targets.size());
  for (const Tensor& target : targets) {
    check_dim("aggregate", target, d_h);
    out.features.push_back(
        ops::matmul(tape, params.out_proj,
                    ops::concat(tape, {target, out.fact_summary})));
  }
  return out;
}

PurifyParams::PurifyParams(int d_h, Rng& rng)
    : proj(init_weight(d_h, d_h, rng)), attn_vec(init_vec(d_h, rng)) {}

std::vector<Tensor> PurifyParams::parameters() const {
  return {proj, attn_vec};
}

std::vector<std::string> PurifyParams::parameter_names(
    const std::string& prefix) const {
  return {prefix + ".proj", prefix + ".attn_vec"};
}

PurifiedSentences question_guided_purify(Tape& tape, const Tensor& question,
                                         const std::vector<Tensor>& sentences,
                                         const PurifyParams& params) {
  if (sentences.empty()) {
    throw ShapeError("purify: no sentences");
  }
  const int d_h = params.attn_vec.dim(0);
  check_dim("purify", question, d_h);

  std::vector<Tensor> logits;
  logits.reserve(sentences.size());
  for (const Tensor& s : sentences) {
    check_dim("purify", s, d_h);
    Tensor gated =
        ops::hadamard(tape, question, ops::matmul(tape, params.proj, s));
    logits.push_back(ops::matmul(tape, params.attn_vec, gated));
  }
  Tensor eta = ops::softmax(tape, ops::concat(tape, logits), 0);

  PurifiedSentences out;
  out.eta = eta.values();
  out.sentences.reserve(sentences.size());
  for (size_t i = 0; i < sentences.size(); ++i) {
    Tensor weight = ops::element(tape, eta, static_cast<int>(i));
    out.sentences.push_back(ops::scale_by(tape, sentences[i], weight));
  }
  return out;
}

HistoryFactParams::HistoryFactParams(int d_h, Rng& rng)
    : purify_history(d_h, rng),
      purify_facts(d_h, rng),
      injection(d_h, rng),
      aggregator(d_h, rng) {}

HistoryFactResult history_fact_pipeline(Tape& tape, const Tensor& question,
                                        const std::vector<Tensor>& history,
                                        const std::vector<Tensor>& facts,
                                        const HistoryFactParams& params,
                                        const HistoryFactOptions& options) {
  if (history.empty()) {
    throw ShapeError("history pipeline: no history rounds");
  }
  if (facts.empty()) {
    throw ShapeError("history pipeline: no facts");
  }

  HistoryFactResult out;

  std::vector<Tensor> hist = history;
  std::vector<Tensor> fact = facts;
  if (options.use_purification) {
    PurifiedSentences ph =
        question_guided_purify(tape, question, history, params.purify_history);
    PurifiedSentences pf =
        question_guided_purify(tape, question, facts, params.purify_facts);
    hist = std::move(ph.sentences);
    fact = std::move(pf.sentences);
    out.eta_history = std::move(ph.eta);
    out.eta_facts = std::move(pf.eta);
  }

  std::vector<Tensor> injected_facts = fact;
  out.injected_history = hist;
  if (options.use_injection) {
    InjectedNodes facts_in =
        cross_graph_inject(tape, question, fact, hist, params.injection);
    InjectedNodes history_in =
        cross_graph_inject(tape, question, hist, fact, params.injection);
    injected_facts = std::move(facts_in.nodes);
    out.gamma_facts_over_history = std::move(facts_in.gamma);
    out.injected_history = std::move(history_in.nodes);
    out.gamma_history_over_facts = std::move(history_in.gamma);
  }

  if (options.use_aggregator) {
    AggregatedFeatures agg =
        aggregate(tape, question, injected_facts, hist, params.aggregator);
    out.features = std::move(agg.features);
    out.delta = std::move(agg.delta);
  } else {
    out.features = out.injected_history;
  }
  return out;
}

}  // namespace knowdial
