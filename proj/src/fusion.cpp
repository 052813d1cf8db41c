#include "knowdial/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace knowdial {

namespace {

Tensor init_weight(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

}  // namespace

FusionBlock::FusionBlock(int d_h, int heads, Rng& rng)
    : d_h_(d_h), heads_(heads) {
  if (heads <= 0 || d_h % heads != 0) {
    throw ShapeError("fusion: hidden dim " + std::to_string(d_h) +
                     " is not divisible by " + std::to_string(heads) +
                     " heads");
  }
  auto make_attn = [&] {
    Attention a;
    a.query_proj = init_weight(d_h, d_h, rng);
    a.key_proj = init_weight(d_h, d_h, rng);
    a.value_proj = init_weight(d_h, d_h, rng);
    a.out_proj = init_weight(d_h, d_h, rng);
    return a;
  };
  vision_attn_ = make_attn();
  history_attn_ = make_attn();
  combine_proj_ = init_weight(d_h, 2 * d_h, rng);
  combine_bias_ = Tensor({d_h}, 0.0, true);
  ln1_gain_ = Tensor({d_h}, 1.0, true);
  ln1_bias_ = Tensor({d_h}, 0.0, true);
  ln2_gain_ = Tensor({d_h}, 1.0, true);
  ln2_bias_ = Tensor({d_h}, 0.0, true);
  ff1_ = init_weight(2 * d_h, d_h, rng);
  ff1_bias_ = Tensor({2 * d_h}, 0.0, true);
  ff2_ = init_weight(d_h, 2 * d_h, rng);
  ff2_bias_ = Tensor({d_h}, 0.0, true);
}

Tensor FusionBlock::attend(Tape& tape, const Attention& attn,
                           const Tensor& query,
                           const std::vector<Tensor>& items,
                           std::vector<std::vector<double>>* weights) const {
  const int head_dim = d_h_ / heads_;
  Tensor q = ops::matmul(tape, attn.query_proj, query);

  // Project keys/values item by item, then stack.
  std::vector<Tensor> key_list, value_list;
  key_list.reserve(items.size());
  value_list.reserve(items.size());
  for (const Tensor& item : items) {
    key_list.push_back(ops::matmul(tape, attn.key_proj, item));
    value_list.push_back(ops::matmul(tape, attn.value_proj, item));
  }
  Tensor key_matrix = ops::stack_rows(tape, key_list);
  Tensor value_matrix = ops::stack_rows(tape, value_list);

  std::vector<Tensor> head_outputs;
  head_outputs.reserve(static_cast<size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    Tensor q_h = ops::slice_cols(tape, q, h * head_dim, head_dim);
    Tensor k_h = ops::slice_cols(tape, key_matrix, h * head_dim, head_dim);
    Tensor v_h = ops::slice_cols(tape, value_matrix, h * head_dim, head_dim);
    Tensor logits = ops::scale(tape, ops::matmul(tape, k_h, q_h),
                               1.0 / std::sqrt(static_cast<double>(head_dim)));
    Tensor alpha = ops::softmax(tape, logits, 0);
    if (weights) weights->push_back(alpha.values());
    head_outputs.push_back(ops::matmul(tape, alpha, v_h));
  }
  Tensor merged = ops::concat(tape, head_outputs);
  return ops::matmul(tape, attn.out_proj, merged);
}

Tensor FusionBlock::fuse(Tape& tape, const Tensor& question,
                         const std::vector<Tensor>& vision,
                         const std::vector<Tensor>& history, Detail* detail,
                         bool training, double dropout_p, Rng* rng) const {
  if (vision.empty() || history.empty()) {
    throw ShapeError("fusion: vision and history lists must be non-empty");
  }
  if (question.shape() != Shape{d_h_}) {
    throw ShapeError("fusion: question of shape " + shape_str(question.shape()) +
                     " does not match hidden dim " + std::to_string(d_h_));
  }

  Tensor vis = attend(tape, vision_attn_, question, vision,
                      detail ? &detail->vision_attention : nullptr);
  Tensor his = attend(tape, history_attn_, question, history,
                      detail ? &detail->history_attention : nullptr);

  Tensor mixed = ops::add(
      tape,
      ops::matmul(tape, combine_proj_, ops::concat(tape, {vis, his})),
      combine_bias_);
  if (training && dropout_p > 0.0 && rng) {
    mixed = ops::dropout(tape, mixed, dropout_p, training, *rng);
  }
  Tensor x = ops::layer_norm(tape, ops::add(tape, question, mixed), ln1_gain_,
                             ln1_bias_);
  Tensor hidden = ops::tanh(
      tape, ops::add(tape, ops::matmul(tape, ff1_, x), ff1_bias_));
  Tensor ff = ops::add(tape, ops::matmul(tape, ff2_, hidden), ff2_bias_);
  if (training && dropout_p > 0.0 && rng) {
    ff = ops::dropout(tape, ff, dropout_p, training, *rng);
  }
  return ops::layer_norm(tape, ops::add(tape, x, ff), ln2_gain_, ln2_bias_);
}

std::vector<Tensor> FusionBlock::parameters() const {
  std::vector<Tensor> out;
  for (const Attention* a : {&vision_attn_, &history_attn_}) {
    out.push_back(a->query_proj);
    out.push_back(a->key_proj);
    out.push_back(a->value_proj);
    out.push_back(a->out_proj);
  }
  out.insert(out.end(), {combine_proj_, combine_bias_, ln1_gain_, ln1_bias_,
                         ff1_, ff1_bias_, ff2_, ff2_bias_, ln2_gain_,
                         ln2_bias_});
  return out;
}

std::vector<std::string> FusionBlock::parameter_names(
    const std::string& prefix) const {
  std::vector<std::string> out;
  for (const char* src : {"vision", "history"}) {
    for (const char* part : {"query_proj", "key_proj", "value_proj",
                             "out_proj"}) {
      out.push_back(prefix + ".attn_" + src + "." + part);
    }
  }
  for (const char* part :
       {"combine_proj", "combine_bias", "ln1_gain", "ln1_bias", "ff1",
        "ff1_bias", "ff2", "ff2_bias", "ln2_gain", "ln2_bias"}) {
    out.push_back(prefix + "." + part);
  }
  return out;
}

Tensor discriminative_scores(Tape& tape, const Tensor& fused,
                             const std::vector<Tensor>& candidate_encodings) {
  if (candidate_encodings.empty()) {
    throw ShapeError("discriminative: no candidates");
  }
  Tensor matrix = ops::stack_rows(tape, candidate_encodings);
  return ops::matmul(tape, matrix, fused);
}

Tensor discriminative_loss(Tape& tape, const Tensor& scores, int gt_index) {
  if (gt_index < 0 || gt_index >= scores.dim(0)) {
    throw ShapeError("discriminative: ground-truth index " +
                     std::to_string(gt_index) + " out of range [0, " +
                     std::to_string(scores.dim(0)) + ")");
  }
  return ops::cross_entropy(tape, scores, gt_index);
}

GenerativeDecoder::GenerativeDecoder(int d_emb, int d_h, int vocab_size,
                                     Rng& rng)
    : d_emb_(d_emb), d_h_(d_h) {
  for (int g = 0; g < 4; ++g) {
    w_[g] = init_weight(d_h, d_emb, rng);
    u_[g] = init_weight(d_h, d_h, rng);
    b_[g] = Tensor({d_h}, 0.0, true);
  }
  out_proj_ = init_weight(vocab_size, d_h, rng);
  out_bias_ = Tensor({vocab_size}, 0.0, true);
}

Tensor GenerativeDecoder::token_logits(Tape& tape, const Tensor& x, Tensor& h,
                                       Tensor& c) const {
  auto pre = [&](int g) {
    return ops::add(tape,
                    ops::add(tape, ops::matmul(tape, w_[g], x),
                             ops::matmul(tape, u_[g], h)),
                    b_[g]);
  };
  Tensor i = ops::sigmoid(tape, pre(0));
  Tensor f = ops::sigmoid(tape, pre(1));
  Tensor o = ops::sigmoid(tape, pre(2));
  Tensor g = ops::tanh(tape, pre(3));
  c = ops::add(tape, ops::hadamard(tape, f, c), ops::hadamard(tape, i, g));
  h = ops::hadamard(tape, o, ops::tanh(tape, c));
  return ops::add(tape, ops::matmul(tape, out_proj_, h), out_bias_);
}

Tensor GenerativeDecoder::nll(Tape& tape, const Tensor& fused,
                              std::span<const int> tokens,
                              const EmbeddingTable& table) const {
  if (tokens.empty()) {
    throw ShapeError("generative: empty candidate");
  }
  // Input at step t is the previous token, starting from the PAD row.
  std::vector<int> inputs = {Vocabulary::kPad};
  inputs.insert(inputs.end(), tokens.begin(), tokens.end() - 1);
  Tensor embedded = ops::embedding_lookup(tape, table.table, inputs);

  Tensor h = fused;
  Tensor c({d_h_}, 0.0, false);
  Tensor total = Tensor::scalar(0.0);
  for (size_t t = 0; t < tokens.size(); ++t) {
    Tensor x = ops::row(tape, embedded, static_cast<int>(t));
    Tensor logits = token_logits(tape, x, h, c);
    Tensor step_loss = ops::cross_entropy(tape, logits, tokens[t]);
    total = t == 0 ? step_loss : ops::add(tape, total, step_loss);
  }
  return total;
}

Tensor GenerativeDecoder::score_candidate(Tape& tape, const Tensor& fused,
                                          std::span<const int> tokens,
                                          const EmbeddingTable& table,
                                          bool length_normalize) const {
  Tensor negative = ops::scale(tape, nll(tape, fused, tokens, table), -1.0);
  if (length_normalize) {
    negative =
        ops::scale(tape, negative, 1.0 / static_cast<double>(tokens.size()));
  }
  return negative;
}

std::vector<Tensor> GenerativeDecoder::parameters() const {
  std::vector<Tensor> out;
  for (int g = 0; g < 4; ++g) {
    out.push_back(w_[g]);
    out.push_back(u_[g]);
    out.push_back(b_[g]);
  }
  out.push_back(out_proj_);
  out.push_back(out_bias_);
  return out;
}

std::vector<std::string> GenerativeDecoder::parameter_names(
    const std::string& prefix) const {
  static const char* kGate[4] = {"i", "f", "o", "g"};
  std::vector<std::string> out;
  for (int g = 0; g < 4; ++g) {
    out.push_back(prefix + ".w_" + kGate[g]);
    out.push_back(prefix + ".u_" + kGate[g]);
    out.push_back(prefix + ".b_" + kGate[g]);
  }
  out.push_back(prefix + ".out_proj");
  out.push_back(prefix + ".out_bias");
  return out;
}

Tensor multitask_loss(Tape& tape, const Tensor& disc_loss,
                      const Tensor& gen_loss) {
  if (!std::isfinite(disc_loss.value()) || !std::isfinite(gen_loss.value())) {
    throw NumericsError("multitask loss: non-finite input");
  }
  return ops::add(tape, disc_loss, gen_loss);
}

std::vector<int> rank_candidates(const std::vector<double>& scores) {
  for (double s : scores) {
    if (!std::isfinite(s)) {
      throw NumericsError("rank_candidates: non-finite score");
    }
  }
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    return scores[static_cast<size_t>(a)] > scores[static_cast<size_t>(b)];
  });
  std::vector<int> ranks(scores.size());
  for (size_t pos = 0; pos < order.size(); ++pos) {
    ranks[static_cast<size_t>(order[pos])] = static_cast<int>(pos) + 1;
  }
  return ranks;
}

}  // namespace knowdial
