#include "knowdial/text.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace knowdial {

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  };
  for (unsigned char ch : text) {
    if (std::isspace(ch)) {
      flush();
    } else if (std::isalnum(ch) || ch == '\'') {
      cur.push_back(static_cast<char>(std::tolower(ch)));
    } else {
      flush();
      out.push_back(std::string(1, static_cast<char>(ch)));
    }
  }
  flush();
  return out;
}

Vocabulary Vocabulary::build(
    const std::vector<std::vector<std::string>>& corpus, int min_freq) {
  if (corpus.empty()) {
    throw TextError("vocabulary: empty corpus");
  }
  std::map<std::string, long> freq;
  for (const auto& doc : corpus) {
    for (const std::string& tok : doc) {
      if (tok.empty()) {
        throw TextError("vocabulary: corpus contains an empty token");
      }
      ++freq[tok];
    }
  }
  std::vector<std::pair<std::string, long>> entries(freq.begin(), freq.end());
  std::sort(entries.begin(), entries.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });

  Vocabulary v;
  v.id_to_token_ = {"<pad>", "<unk>"};
  for (const auto& [tok, count] : entries) {
    if (count >= min_freq) {
      v.token_to_id_[tok] = static_cast<int>(v.id_to_token_.size());
      v.id_to_token_.push_back(tok);
    }
  }
  return v;
}

bool Vocabulary::contains(const std::string& token) const {
  return token_to_id_.count(token) > 0;
}

int Vocabulary::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::token(int id) const {
  if (id < 0 || id >= size()) {
    throw TextError("vocabulary: id " + std::to_string(id) + " out of range");
  }
  return id_to_token_[static_cast<size_t>(id)];
}

std::vector<int> Vocabulary::encode(
    const std::vector<std::string>& tokens) const {
  std::vector<int> ids;
  ids.reserve(tokens.size());
  for (const std::string& tok : tokens) ids.push_back(id(tok));
  return ids;
}

std::uint64_t Vocabulary::fingerprint() const {
  // FNV-1a over the ordered token list.
  std::uint64_t h = 14695981039346656037ull;
  for (const std::string& tok : id_to_token_) {
    for (char c : tok) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  }
  return h;
}

std::vector<int> pad_or_truncate(std::vector<int> ids, int max_len) {
  if (max_len <= 0) {
    throw TextError("pad_or_truncate: max_len must be positive");
  }
  if (static_cast<int>(ids.size()) > max_len) {
    ids.resize(static_cast<size_t>(max_len));
  } else {
    ids.resize(static_cast<size_t>(max_len), Vocabulary::kPad);
  }
  return ids;
}

EmbeddingTable::EmbeddingTable(int vocab_size, int d_emb, Rng& rng)
    : table(Tensor::uniform({vocab_size, d_emb}, -0.08, 0.08, rng, true)) {}

std::vector<double> EmbeddingTable::lookup_raw(int id) const {
  const int d = table.dim(1);
  std::vector<double> out(static_cast<size_t>(d));
  for (int c = 0; c < d; ++c) out[static_cast<size_t>(c)] = table.at(id, c);
  return out;
}

int EmbeddingTable::load_pretrained(const std::string& path,
                                    const Vocabulary& vocab) {
  std::ifstream in(path);
  if (!in) {
    throw TextError("embedding file not readable: " + path);
  }
  const int d = table.dim(1);
  int loaded = 0;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (!vocab.contains(tok)) continue;
    const int id = vocab.id(tok);
    std::vector<double> row(static_cast<size_t>(d));
    for (int c = 0; c < d; ++c) {
      if (!(ls >> row[static_cast<size_t>(c)])) {
        throw TextError("embedding file line " + std::to_string(lineno) +
                        ": expected " + std::to_string(d) + " floats");
      }
    }
    for (int c = 0; c < d; ++c) {
      table.values()[static_cast<size_t>(id) * d + c] =
          row[static_cast<size_t>(c)];
    }
    ++loaded;
  }
  return loaded;
}

namespace {

Tensor init_weight(int rows, int cols, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(cols));
  return Tensor::uniform({rows, cols}, -bound, bound, rng, true);
}

}  // namespace

RecurrentEncoder::RecurrentEncoder(int d_emb, int d_h, Rng& rng)
    : d_emb_(d_emb), d_h_(d_h) {
  for (int g = 0; g < 4; ++g) {
    w_[g] = init_weight(d_h, d_emb, rng);
    u_[g] = init_weight(d_h, d_h, rng);
    b_[g] = Tensor({d_h}, 0.0, true);
  }
}

Tensor RecurrentEncoder::step(Tape& tape, const Tensor& x, Tensor& h,
                              Tensor& c) const {
  auto pre = [&](int g) {
    Tensor wx = ops::matmul(tape, w_[g], x);
    Tensor uh = ops::matmul(tape, u_[g], h);
    return ops::add(tape, ops::add(tape, wx, uh), b_[g]);
  };
  Tensor i = ops::sigmoid(tape, pre(0));
  Tensor f = ops::sigmoid(tape, pre(1));
  Tensor o = ops::sigmoid(tape, pre(2));
  Tensor g = ops::tanh(tape, pre(3));
  c = ops::add(tape, ops::hadamard(tape, f, c), ops::hadamard(tape, i, g));
  h = ops::hadamard(tape, o, ops::tanh(tape, c));
  return h;
}

Tensor RecurrentEncoder::encode(Tape& tape, std::span<const int> ids,
                                const EmbeddingTable& table) const {
  const int vocab = table.table.dim(0);
  for (int id : ids) {
    if (id < 0 || id >= vocab) {
      throw TextError("encode: token id " + std::to_string(id) +
                      " out of range [0, " + std::to_string(vocab) + ")");
    }
  }
  std::vector<int> live;
  live.reserve(ids.size());
  for (int id : ids) {
    if (id != Vocabulary::kPad) live.push_back(id);
  }
  if (live.empty()) {
    return Tensor({d_h_}, 0.0, false);
  }
  Tensor embedded = ops::embedding_lookup(tape, table.table, live);
  Tensor h({d_h_}, 0.0, false);
  Tensor c({d_h_}, 0.0, false);
  for (size_t t = 0; t < live.size(); ++t) {
    Tensor x = ops::row(tape, embedded, static_cast<int>(t));
    step(tape, x, h, c);
  }
  return h;
}

std::vector<Tensor> RecurrentEncoder::parameters() const {
  std::vector<Tensor> out;
  for (int g = 0; g < 4; ++g) {
    out.push_back(w_[g]);
    out.push_back(u_[g]);
    out.push_back(b_[g]);
  }
  return out;
}

std::vector<std::string> RecurrentEncoder::parameter_names(
    const std::string& prefix) const {
  static const char* kGate[4] = {"i", "f", "o", "g"};
  std::vector<std::string> out;
  for (int g = 0; g < 4; ++g) {
    out.push_back(prefix + ".w_" + kGate[g]);
    out.push_back(prefix + ".u_" + kGate[g]);
    out.push_back(prefix + ".b_" + kGate[g]);
  }
  return out;
}

}  // namespace knowdial
