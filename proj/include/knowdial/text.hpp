#pragma once

#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "knowdial/ops.hpp"
#include "knowdial/tensor.hpp"

namespace knowdial {

class TextError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Lowercases and splits on whitespace; punctuation characters become
// standalone tokens. Never emits empty tokens.
std::vector<std::string> tokenize(const std::string& text);

class Vocabulary {
 public:
  static constexpr int kPad = 0;
  static constexpr int kUnk = 1;

  // Tokens kept only when their corpus frequency is >= min_freq; ids are
  // assigned by descending frequency, ties lexicographic.
  static Vocabulary build(const std::vector<std::vector<std::string>>& corpus,
                          int min_freq = 5);

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool contains(const std::string& token) const;
  int id(const std::string& token) const;  // kUnk when absent
  const std::string& token(int id) const;

  std::vector<int> encode(const std::vector<std::string>& tokens) const;

  std::uint64_t fingerprint() const;

 private:
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::string> id_to_token_;
};

// Truncates to the first max_len ids or pads with PAD up to max_len.
std::vector<int> pad_or_truncate(std::vector<int> ids, int max_len = 20);

struct EmbeddingTable {
  Tensor table;  // [vocab, d_emb], learned

  EmbeddingTable() = default;
  EmbeddingTable(int vocab_size, int d_emb, Rng& rng);

  int dim() const { return table.dim(1); }

  // Raw row copy, no tape involvement; PAD reads as zero is not assumed
  // here, callers skip PAD themselves.
  std::vector<double> lookup_raw(int id) const;

  // Optional loader for one-token-per-line text embeddings
  // ("token v1 v2 ... v_demb"); rows for tokens absent from the file keep
  // their random initialization. Returns the number of rows loaded.
  int load_pretrained(const std::string& path, const Vocabulary& vocab);
};

/// Single-layer unidirectional LSTM returning the final hidden state of
/// the last non-PAD position. PAD steps are skipped entirely, so
/// appending padding never changes the encoding; all-PAD input encodes
/// to the zero vector.
class RecurrentEncoder {
 public:
  RecurrentEncoder() = default;
  RecurrentEncoder(int d_emb, int d_h, Rng& rng);

  int hidden_dim() const { return d_h_; }

  Tensor encode(Tape& tape, std::span<const int> ids,
                const EmbeddingTable& table) const;

  std::vector<Tensor> parameters() const;
  std::vector<std::string> parameter_names(const std::string& prefix) const;

 private:
  Tensor step(Tape& tape, const Tensor& x, Tensor& h, Tensor& c) const;

  int d_emb_ = 0;
  int d_h_ = 0;
  // Gate order: input, forget, output, cell.
  Tensor w_[4], u_[4], b_[4];
};

}  // namespace knowdial
