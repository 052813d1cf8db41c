#pragma once

#include <span>
#include <string>
#include <vector>

#include "knowdial/ops.hpp"
#include "knowdial/tensor.hpp"
#include "knowdial/text.hpp"

namespace knowdial {

/// Joint question/vision/history representation: the question cross-attends
/// into each source independently (multi-head, scaled dot-product), the
/// attended summaries are concatenated and projected, then residual +
/// layer-norm and a small tanh feed-forward produce the fused vector.
class FusionBlock {
 public:
  FusionBlock() = default;
  FusionBlock(int d_h, int heads, Rng& rng);

  struct Attention {
    Tensor query_proj, key_proj, value_proj, out_proj;  // [d_h, d_h]
  };

  struct Detail {
    // Per source, per head: attention over that source's items.
    std::vector<std::vector<double>> vision_attention;
    std::vector<std::vector<double>> history_attention;
  };

  Tensor fuse(Tape& tape, const Tensor& question,
              const std::vector<Tensor>& vision,
              const std::vector<Tensor>& history, Detail* detail = nullptr,
              bool training = false, double dropout_p = 0.0,
              Rng* rng = nullptr) const;

  int heads() const { return heads_; }

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;

 private:
  Tensor attend(Tape& tape, const Attention& attn, const Tensor& query,
                const std::vector<Tensor>& items,
                std::vector<std::vector<double>>* weights) const;

  int d_h_ = 0;
  int heads_ = 0;
  Attention vision_attn_, history_attn_;
  Tensor combine_proj_;  // [d_h, 2*d_h]
  Tensor combine_bias_;  // [d_h]
  Tensor ln1_gain_, ln1_bias_, ln2_gain_, ln2_bias_;
  Tensor ff1_, ff1_bias_;  // [2*d_h, d_h]
  Tensor ff2_, ff2_bias_;  // [d_h, 2*d_h]
};

// score_c = fused . encoding_c for every candidate.
Tensor discriminative_scores(Tape& tape, const Tensor& fused,
                             const std::vector<Tensor>& candidate_encodings);

// Softmax cross-entropy of the scores against the ground-truth index (the
// multi-class N-pair form).
Tensor discriminative_loss(Tape& tape, const Tensor& scores, int gt_index);

/// Candidate scoring by conditional token log-likelihood under an LSTM
/// language decoder whose initial hidden state is the fused vector. The
/// PAD embedding doubles as the begin-of-sequence input.
class GenerativeDecoder {
 public:
  GenerativeDecoder() = default;
  GenerativeDecoder(int d_emb, int d_h, int vocab_size, Rng& rng);

  // Sum of log p(token_t | tokens_<t, fused); optionally divided by the
  // token count for length-normalized ranking.
  Tensor score_candidate(Tape& tape, const Tensor& fused,
                         std::span<const int> tokens,
                         const EmbeddingTable& table,
                         bool length_normalize = false) const;

  // Negative log-likelihood of the reference answer.
  Tensor nll(Tape& tape, const Tensor& fused, std::span<const int> tokens,
             const EmbeddingTable& table) const;

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;

 private:
  Tensor token_logits(Tape& tape, const Tensor& x, Tensor& h, Tensor& c) const;

  int d_emb_ = 0;
  int d_h_ = 0;
  Tensor w_[4], u_[4], b_[4];  // gate order: input, forget, output, cell
  Tensor out_proj_;            // [vocab, d_h]
  Tensor out_bias_;            // [vocab]
};

// Plain unweighted sum of the two losses.
Tensor multitask_loss(Tape& tape, const Tensor& disc_loss,
                      const Tensor& gen_loss);

// Descending-score ranks starting at 1; equal scores rank by lower index.
std::vector<int> rank_candidates(const std::vector<double>& scores);

}  // namespace knowdial
