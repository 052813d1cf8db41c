#pragma once

#include <string>
#include <vector>

#include "knowdial/text.hpp"

namespace knowdial {

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct FactTriple {
  std::string subject;
  std::string relation;
  std::string object;

  std::string description() const {
    return subject + " " + relation + " " + object;
  }
  bool operator==(const FactTriple&) const = default;
};

// Tab-separated "subject<TAB>relation<TAB>object", one per line, '#'
// comments. Duplicates are preserved; filtering is the retriever's call.
std::vector<FactTriple> load_triple_store(const std::string& path);

struct ScoredFact {
  FactTriple fact;
  double score = 0.0;
  int store_index = 0;
};

// Ordered best-first; ties keep store order.
struct CandidateFactSet {
  std::vector<ScoredFact> facts;

  int size() const { return static_cast<int>(facts.size()); }
  bool empty() const { return facts.empty(); }
  const FactTriple& triple(int i) const {
    return facts[static_cast<size_t>(i)].fact;
  }
};

// Mean over fact words of the max cosine similarity against any caption
// or concept word. Stop-words and out-of-vocabulary words are dropped on
// both sides; `degenerate` flags a 0.0 returned because nothing was left
// to compare.
struct FactScore {
  double value = 0.0;
  bool degenerate = false;
};
FactScore score_fact(const FactTriple& fact,
                     const std::vector<std::string>& caption_tokens,
                     const std::vector<std::string>& concept_tokens,
                     const EmbeddingTable& table, const Vocabulary& vocab);

CandidateFactSet retrieve_candidates(
    const std::vector<FactTriple>& store,
    const std::vector<std::string>& caption_tokens,
    const std::vector<std::string>& concept_tokens, const EmbeddingTable& table,
    const Vocabulary& vocab, int k = 100);

bool is_stop_word(const std::string& token);

// Learned embedding per relation string; unseen relations share row 0.
class RelationVocab {
 public:
  RelationVocab() = default;
  explicit RelationVocab(const std::vector<FactTriple>& store);

  int size() const { return static_cast<int>(relations_.size()); }
  int id(const std::string& relation) const;
  const std::vector<std::string>& relations() const { return relations_; }
  std::uint64_t fingerprint() const;

 private:
  std::vector<std::string> relations_;  // index 0 reserved for unknown
  std::unordered_map<std::string, int> ids_;
};

struct SentenceFactSet {
  std::vector<Tensor> features;  // K vectors of dim d_h, candidate order
};

// One vector per fact: the encoded "subject relation object" description.
SentenceFactSet build_sentence_facts(Tape& tape, const CandidateFactSet& cands,
                                     const RecurrentEncoder& encoder,
                                     const EmbeddingTable& table,
                                     const Vocabulary& vocab);

/// Entity graph over the candidate facts. Entities are deduplicated by
/// surface string, so facts sharing a subject or object share a node.
/// Edge features combine the relation embedding with the encoded fact
/// description and are identical in both directions; non-adjacent pairs
/// hold the zero edge and stay masked out.
struct FactGraph {
  std::vector<std::string> entities;        // node surface strings
  std::vector<Tensor> nodes;                // encoded entity phrases [d_h]
  std::vector<Tensor> edges;                // n*n row-major, [d_h] each
  std::vector<std::uint8_t> mask;           // n*n adjacency, diagonal false
  std::vector<std::pair<int, int>> fact_endpoints;  // per fact (subj, obj)

  int node_count() const { return static_cast<int>(entities.size()); }
  const Tensor& edge(int i, int j) const {
    return edges[static_cast<size_t>(i) * entities.size() +
                 static_cast<size_t>(j)];
  }
  bool adjacent(int i, int j) const {
    return mask[static_cast<size_t>(i) * entities.size() +
                static_cast<size_t>(j)] != 0;
  }
};

struct FactGraphParams {
  Tensor relation_table;  // [n_relations, d_h]
  Tensor edge_proj;       // [d_h, 2*d_h]

  FactGraphParams() = default;
  FactGraphParams(int n_relations, int d_h, Rng& rng);
};

FactGraph build_fact_graph(Tape& tape, const CandidateFactSet& cands,
                           const RecurrentEncoder& encoder,
                           const EmbeddingTable& table, const Vocabulary& vocab,
                           const RelationVocab& relations,
                           const FactGraphParams& params);

}  // namespace knowdial
