#include "knowdial/model.hpp"

#include <algorithm>
#include <cmath>

namespace knowdial {

Model::Model(ModelConfig config, Vocabulary vocab, RelationVocab relations,
             Rng& rng)
    : config_(std::move(config)),
      vocab_(std::move(vocab)),
      relations_(std::move(relations)),
      embedding_(vocab_.size(), config_.d_emb, rng),
      enc_question_(config_.d_emb, config_.d_h, rng),
      enc_history_(config_.d_emb, config_.d_h, rng),
      enc_fact_(config_.d_emb, config_.d_h, rng),
      fact_graph_(std::max(relations_.size(), 1), config_.d_h, rng),
      visual_(config_.d_v, std::max(config_.d_r, 1), config_.d_h, rng),
      gcn_vision_(config_.d_h, rng),
      gcn_fact_(config_.d_h, rng),
      inject_vision_(config_.d_h, rng),
      agg_vision_(config_.d_h, rng),
      history_(config_.d_h, rng),
      fusion_(config_.d_h, config_.heads, rng),
      gen_decoder_(config_.d_emb, config_.d_h, vocab_.size(), rng) {}

std::vector<NamedParam> Model::parameters() const {
  std::vector<NamedParam> out;
  auto add = [&](const std::string& name, const Tensor& t) {
    out.push_back({name, t});
  };
  auto add_all = [&](const std::vector<std::string>& names,
                     const std::vector<Tensor>& tensors) {
    for (size_t i = 0; i < names.size(); ++i) add(names[i], tensors[i]);
  };

  add("embedding.table", embedding_.table);
  add_all(enc_question_.parameter_names("enc_question"),
          enc_question_.parameters());
  if (!config_.share_text_encoders) {
    add_all(enc_history_.parameter_names("enc_history"),
            enc_history_.parameters());
    add_all(enc_fact_.parameter_names("enc_fact"), enc_fact_.parameters());
  }
  add("relation_embedding.table", fact_graph_.relation_table);
  add("fact_edge.proj", fact_graph_.edge_proj);
  add("vis_proj.weight", visual_.node_proj);
  add("vis_proj.bias", visual_.node_bias);
  if (config_.d_r > 0) {
    add("vis_edge.rel_proj", visual_.edge_proj);
  } else {
    add("vis_edge.pair_proj", visual_.edge_from_pair);
  }
  add_all(gcn_vision_.parameter_names("gcn_vision"), gcn_vision_.parameters());
  add_all(gcn_fact_.parameter_names("gcn_fact"), gcn_fact_.parameters());
  add_all(inject_vision_.parameter_names("inject_vision"),
          inject_vision_.parameters());
  add_all(agg_vision_.parameter_names("agg_vision"), agg_vision_.parameters());
  add_all(history_.purify_history.parameter_names("purify_history"),
          history_.purify_history.parameters());
  add_all(history_.purify_facts.parameter_names("purify_facts"),
          history_.purify_facts.parameters());
  add_all(history_.injection.parameter_names("inject_text"),
          history_.injection.parameters());
  add_all(history_.aggregator.parameter_names("agg_text"),
          history_.aggregator.parameters());
  add_all(fusion_.parameter_names("fusion"), fusion_.parameters());
  add_all(gen_decoder_.parameter_names("gen_decoder"),
          gen_decoder_.parameters());
  return out;
}

std::vector<std::string> Model::parameter_groups() const {
  std::vector<std::string> out;
  for (const NamedParam& p : parameters()) {
    const std::string g = p.group();
    if (std::find(out.begin(), out.end(), g) == out.end()) out.push_back(g);
  }
  return out;
}

void Model::zero_grads() const {
  for (const NamedParam& p : parameters()) p.tensor.zero_grad();
}

Tensor Model::encode_with(const RecurrentEncoder& enc, Tape& tape,
                          std::span<const int> ids) const {
  return enc.encode(tape, ids, embedding_);
}

PreparedInstance Model::prepare(const DialogInstance& instance,
                                const ImageFeatures& features,
                                const std::vector<FactTriple>& store) const {
  PreparedInstance p;
  p.image_id = instance.image_id;
  p.question_tokens = instance.question;
  p.question_ids =
      pad_or_truncate(vocab_.encode(instance.question), config_.max_len);

  p.history_ids.push_back(
      pad_or_truncate(vocab_.encode(instance.caption), config_.max_len));
  for (const DialogRound& round : instance.rounds) {
    std::vector<std::string> sentence = round.question;
    sentence.insert(sentence.end(), round.answer.begin(), round.answer.end());
    p.history_ids.push_back(
        pad_or_truncate(vocab_.encode(sentence), config_.max_len));
  }

  for (const auto& cand : instance.candidates) {
    std::vector<int> ids = vocab_.encode(cand);
    if (static_cast<int>(ids.size()) > config_.max_len) {
      ids.resize(static_cast<size_t>(config_.max_len));
    }
    p.candidate_ids.push_back(std::move(ids));
  }
  p.gt_index = instance.gt_index;
  p.relevance = instance.relevance;
  p.gt_tokens = instance.candidates[static_cast<size_t>(instance.gt_index)];

  if (features.dim != config_.d_v) {
    throw DataError("prepare: feature dim " + std::to_string(features.dim) +
                    " does not match configured d_v " +
                    std::to_string(config_.d_v));
  }
  p.object_features =
      Tensor::from_values({features.n, features.dim}, features.features);
  if (!features.relations.empty()) {
    if (config_.d_r <= 0 || features.relation_dim != config_.d_r) {
      throw DataError("prepare: relation dim " +
                      std::to_string(features.relation_dim) +
                      " does not match configured d_r " +
                      std::to_string(config_.d_r));
    }
    for (const auto& row : features.relations) {
      p.relation_features.push_back(
          Tensor::from_values({config_.d_r}, row));
    }
  }

  if (config_.use_sentence_facts || config_.use_graph_facts) {
    std::vector<std::string> concepts = features.labels;
    p.facts = retrieve_candidates(store, instance.caption, concepts,
                                  embedding_, vocab_, config_.k_facts);
  }
  return p;
}

Model::FusedState Model::encode_and_fuse(Tape& tape,
                                         const PreparedInstance& inst,
                                         bool training, Rng* rng,
                                         TraceDetail* trace) const {
  const int d_h = config_.d_h;
  Tensor q = encode_with(enc_question_, tape, inst.question_ids);
  Tensor gcn_question = config_.question_in_gcn ? q : Tensor();

  // Vision stream.
  const bool has_relations = !inst.relation_features.empty();
  VisualGraph vg = construct_visual_graph(
      tape, inst.object_features, visual_,
      has_relations ? &inst.relation_features : nullptr);
  std::vector<Tensor> vis_nodes = vg.nodes;
  if (config_.use_purification) {
    PurifiedNodes pv =
        gcn_purify(tape, vg.nodes, vg.edges, vg.mask, gcn_question, gcn_vision_);
    vis_nodes = std::move(pv.nodes);
    if (trace) trace->gcn_alpha_vision = std::move(pv.attention);
  }

  const bool graph_facts = config_.use_graph_facts && !inst.facts.empty();
  std::vector<Tensor> vision_stream;
  if (graph_facts) {
    FactGraph fg = build_fact_graph(tape, inst.facts, fact_encoder(),
                                    embedding_, vocab_, relations_, fact_graph_);
    if (trace) trace->entity_labels = fg.entities;
    std::vector<Tensor> fact_nodes = fg.nodes;
    if (config_.use_purification) {
      PurifiedNodes pf =
          gcn_purify(tape, fg.nodes, fg.edges, fg.mask, gcn_question, gcn_fact_);
      fact_nodes = std::move(pf.nodes);
      if (trace) trace->gcn_alpha_facts = std::move(pf.attention);
    }

    std::vector<Tensor> injected_facts = fact_nodes;
    std::vector<Tensor> injected_vision;
    if (config_.use_injection) {
      InjectedNodes facts_in =
          cross_graph_inject(tape, q, fact_nodes, vis_nodes, inject_vision_);
      injected_facts = std::move(facts_in.nodes);
      if (trace) trace->gamma_entities_over_vision = std::move(facts_in.gamma);
      if (trace || !config_.use_aggregator) {
        InjectedNodes vision_in =
            cross_graph_inject(tape, q, vis_nodes, fact_nodes, inject_vision_);
        injected_vision = std::move(vision_in.nodes);
        if (trace) {
          trace->gamma_vision_over_entities = std::move(vision_in.gamma);
        }
      }
    }

    if (config_.use_aggregator) {
      AggregatedFeatures agg =
          aggregate(tape, q, injected_facts, vis_nodes, agg_vision_);
      vision_stream = std::move(agg.features);
      if (trace) trace->delta_entities = std::move(agg.delta);
    } else if (!injected_vision.empty()) {
      vision_stream = std::move(injected_vision);
    } else {
      vision_stream = vis_nodes;
    }
  } else if (config_.use_aggregator) {
    // No fact graph: pool against an empty fact summary so the stream
    // keeps the same projection and dimensionality.
    Tensor zero({d_h}, 0.0);
    for (const Tensor& node : vis_nodes) {
      vision_stream.push_back(ops::matmul(tape, agg_vision_.out_proj,
                                          ops::concat(tape, {node, zero})));
    }
  } else {
    vision_stream = vis_nodes;
  }

  // History stream.
  std::vector<Tensor> history_sents;
  history_sents.reserve(inst.history_ids.size());
  for (const auto& ids : inst.history_ids) {
    history_sents.push_back(encode_with(history_encoder(), tape, ids));
  }

  const bool sentence_facts = config_.use_sentence_facts && !inst.facts.empty();
  std::vector<Tensor> history_stream;
  if (sentence_facts) {
    SentenceFactSet facts =
        build_sentence_facts(tape, inst.facts, fact_encoder(), embedding_, vocab_);
    HistoryFactOptions opts;
    opts.use_purification = config_.use_purification;
    opts.use_injection = config_.use_injection;
    opts.use_aggregator = config_.use_aggregator;
    HistoryFactResult hr = history_fact_pipeline(tape, q, history_sents,
                                                 facts.features, history_, opts);
    history_stream = std::move(hr.features);
    if (trace) {
      trace->eta_history = std::move(hr.eta_history);
      trace->eta_facts = std::move(hr.eta_facts);
      trace->gamma_history_over_facts = std::move(hr.gamma_history_over_facts);
      trace->gamma_facts_over_history = std::move(hr.gamma_facts_over_history);
      trace->delta_facts = std::move(hr.delta);
    }
  } else {
    std::vector<Tensor> hs = history_sents;
    if (config_.use_purification) {
      PurifiedSentences ph = question_guided_purify(tape, q, history_sents,
                                                    history_.purify_history);
      hs = std::move(ph.sentences);
      if (trace) trace->eta_history = std::move(ph.eta);
    }
    if (config_.use_aggregator) {
      Tensor zero({d_h}, 0.0);
      for (const Tensor& s : hs) {
        history_stream.push_back(ops::matmul(tape, history_.aggregator.out_proj,
                                             ops::concat(tape, {s, zero})));
      }
    } else {
      history_stream = std::move(hs);
    }
  }

  if (trace && !inst.facts.empty()) {
    for (const ScoredFact& sf : inst.facts.facts) {
      trace->fact_strings.push_back(sf.fact.description());
    }
  }

  Tensor fused =
      fusion_.fuse(tape, q, vision_stream, history_stream,
                   trace ? &trace->fusion : nullptr, training,
                   config_.dropout, rng);
  return {q, fused};
}

ForwardResult Model::forward(Tape& tape, const PreparedInstance& inst,
                             bool training, Rng* rng,
                             TraceDetail* trace) const {
  FusedState state = encode_and_fuse(tape, inst, training, rng, trace);

  ForwardResult out;
  if (config_.wants_disc()) {
    std::vector<Tensor> encodings;
    encodings.reserve(inst.candidate_ids.size());
    for (const auto& ids : inst.candidate_ids) {
      encodings.push_back(encode_with(history_encoder(), tape, ids));
    }
    out.disc_scores = discriminative_scores(tape, state.fused, encodings);
    out.disc_loss = discriminative_loss(tape, out.disc_scores, inst.gt_index);
  }
  if (config_.wants_gen()) {
    out.gen_loss = gen_decoder_.nll(
        tape, state.fused,
        inst.candidate_ids[static_cast<size_t>(inst.gt_index)], embedding_);
  }

  if (config_.mode == "both") {
    out.loss = multitask_loss(tape, out.disc_loss, out.gen_loss);
  } else if (config_.mode == "gen") {
    out.loss = out.gen_loss;
  } else {
    out.loss = out.disc_loss;
  }
  return out;
}

InstanceScores Model::score(const PreparedInstance& inst) const {
  NoGradGuard guard;
  Tape tape;
  FusedState state = encode_and_fuse(tape, inst, false, nullptr, nullptr);

  InstanceScores out;
  if (config_.wants_disc()) {
    std::vector<Tensor> encodings;
    for (const auto& ids : inst.candidate_ids) {
      encodings.push_back(encode_with(history_encoder(), tape, ids));
    }
    out.disc = discriminative_scores(tape, state.fused, encodings).values();
  }
  if (config_.wants_gen()) {
    for (const auto& ids : inst.candidate_ids) {
      out.gen.push_back(gen_decoder_
                            .score_candidate(tape, state.fused, ids, embedding_,
                                             config_.gen_length_normalize)
                            .value());
    }
  }
  return out;
}

std::vector<GroupCheck> gradcheck_model(const Model& model,
                                        const PreparedInstance& inst,
                                        double eps) {
  std::vector<NamedParam> params = model.parameters();
  model.zero_grads();
  {
    Tape tape;
    ForwardResult fr = model.forward(tape, inst, false, nullptr);
    tape.backward(fr.loss);
  }
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (const NamedParam& p : params) analytic.push_back(p.tensor.grad());

  auto eval_loss = [&] {
    NoGradGuard guard;
    Tape tape;
    return model.forward(tape, inst, false, nullptr).loss.value();
  };

  std::vector<GroupCheck> checks;
  auto check_for = [&](const std::string& group) -> GroupCheck& {
    for (GroupCheck& c : checks) {
      if (c.group == group) return c;
    }
    checks.push_back({group, 0.0, 0});
    return checks.back();
  };

  for (size_t p = 0; p < params.size(); ++p) {
    GroupCheck& check = check_for(params[p].group());
    std::vector<double>& vals = params[p].tensor.values();
    for (size_t i = 0; i < vals.size(); ++i) {
      const double orig = vals[i];
      vals[i] = orig + eps;
      const double hi = eval_loss();
      vals[i] = orig - eps;
      const double lo = eval_loss();
      vals[i] = orig;
      const double numeric = (hi - lo) / (2.0 * eps);
      const double a = analytic[p][i];
      const double err = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-8});
      check.max_rel_error = std::max(check.max_rel_error, err);
      check.n_components += 1;
    }
  }
  model.zero_grads();
  return checks;
}

}  // namespace knowdial
