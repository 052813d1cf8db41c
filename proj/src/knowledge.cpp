#include "knowdial/knowledge.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

namespace knowdial {

std::vector<FactTriple> load_triple_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("triple store not readable: " + path);
  }
  std::vector<FactTriple> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields;
    std::string field;
    std::istringstream ls(line);
    while (std::getline(ls, field, '\t')) fields.push_back(field);
    if (fields.size() != 3 || fields[0].empty() || fields[1].empty() ||
        fields[2].empty()) {
      throw DataError("triple store line " + std::to_string(lineno) +
                      ": expected subject<TAB>relation<TAB>object");
    }
    out.push_back({fields[0], fields[1], fields[2]});
  }
  return out;
}

bool is_stop_word(const std::string& token) {
  static const std::unordered_set<std::string> kStop = {
      "a",  "an", "the", "is",  "are", "was",  "were", "at",   "on",
      "in", "of", "to",  "and", "or",  "it",   "this", "that", "there",
      "be", "with"};
  return kStop.count(token) > 0;
}

namespace {

// In-vocabulary, non-stop-word ids for a word list.
std::vector<int> content_ids(const std::vector<std::string>& words,
                             const Vocabulary& vocab) {
  std::vector<int> ids;
  for (const std::string& w : words) {
    if (w.empty() || is_stop_word(w) || !vocab.contains(w)) continue;
    ids.push_back(vocab.id(w));
  }
  return ids;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

FactScore score_fact(const FactTriple& fact,
                     const std::vector<std::string>& caption_tokens,
                     const std::vector<std::string>& concept_tokens,
                     const EmbeddingTable& table, const Vocabulary& vocab) {
  std::vector<std::string> fact_words = tokenize(fact.description());
  std::vector<int> fact_ids = content_ids(fact_words, vocab);

  std::vector<std::string> query_words = caption_tokens;
  query_words.insert(query_words.end(), concept_tokens.begin(),
                     concept_tokens.end());
  std::vector<int> query_ids = content_ids(query_words, vocab);

  if (fact_ids.empty() || query_ids.empty()) {
    return {0.0, true};
  }

  std::vector<std::vector<double>> query_rows;
  query_rows.reserve(query_ids.size());
  for (int id : query_ids) query_rows.push_back(table.lookup_raw(id));

  double total = 0.0;
  for (int fid : fact_ids) {
    const std::vector<double> frow = table.lookup_raw(fid);
    double best = -1.0;
    for (const auto& qrow : query_rows) {
      best = std::max(best, cosine(frow, qrow));
    }
    total += best;
  }
  return {total / static_cast<double>(fact_ids.size()), false};
}

CandidateFactSet retrieve_candidates(
    const std::vector<FactTriple>& store,
    const std::vector<std::string>& caption_tokens,
    const std::vector<std::string>& concept_tokens, const EmbeddingTable& table,
    const Vocabulary& vocab, int k) {
  if (store.empty()) {
    throw DataError("retrieve_candidates: empty triple store");
  }
  if (k <= 0) {
    throw DataError("retrieve_candidates: k must be positive");
  }
  std::vector<ScoredFact> scored;
  scored.reserve(store.size());
  for (size_t i = 0; i < store.size(); ++i) {
    const FactScore s =
        score_fact(store[i], caption_tokens, concept_tokens, table, vocab);
    scored.push_back({store[i], s.value, static_cast<int>(i)});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredFact& a, const ScoredFact& b) {
                     return a.score > b.score;
                   });
  if (static_cast<int>(scored.size()) > k) {
    scored.resize(static_cast<size_t>(k));
  }
  return {std::move(scored)};
}

RelationVocab::RelationVocab(const std::vector<FactTriple>& store) {
  relations_.push_back("<unk-relation>");
  for (const FactTriple& t : store) {
    if (!ids_.count(t.relation)) {
      ids_[t.relation] = static_cast<int>(relations_.size());
      relations_.push_back(t.relation);
    }
  }
}

int RelationVocab::id(const std::string& relation) const {
  auto it = ids_.find(relation);
  return it == ids_.end() ? 0 : it->second;
}

std::uint64_t RelationVocab::fingerprint() const {
  std::uint64_t h = 14695981039346656037ull;
  for (const std::string& r : relations_) {
    for (char c : r) {
      h ^= static_cast<unsigned char>(c);
      h *= 1099511628211ull;
    }
    h ^= 0xfe;
    h *= 1099511628211ull;
  }
  return h;
}

SentenceFactSet build_sentence_facts(Tape& tape, const CandidateFactSet& cands,
                                     const RecurrentEncoder& encoder,
                                     const EmbeddingTable& table,
                                     const Vocabulary& vocab) {
  if (cands.empty()) {
    throw DataError("build_sentence_facts: empty candidate set");
  }
  SentenceFactSet out;
  out.features.reserve(static_cast<size_t>(cands.size()));
  for (const ScoredFact& sf : cands.facts) {
    std::vector<int> ids = vocab.encode(tokenize(sf.fact.description()));
    out.features.push_back(encoder.encode(tape, ids, table));
  }
  return out;
}

FactGraphParams::FactGraphParams(int n_relations, int d_h, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(2 * d_h));
  relation_table = Tensor::uniform({n_relations, d_h}, -0.08, 0.08, rng, true);
  edge_proj = Tensor::uniform({d_h, 2 * d_h}, -bound, bound, rng, true);
}

FactGraph build_fact_graph(Tape& tape, const CandidateFactSet& cands,
                           const RecurrentEncoder& encoder,
                           const EmbeddingTable& table, const Vocabulary& vocab,
                           const RelationVocab& relations,
                           const FactGraphParams& params) {
  if (cands.empty()) {
    throw DataError("build_fact_graph: empty candidate set");
  }
  FactGraph g;

  // Dedup entities by surface string, first-seen order.
  std::unordered_map<std::string, int> entity_ids;
  auto entity_id = [&](const std::string& phrase) {
    auto it = entity_ids.find(phrase);
    if (it != entity_ids.end()) return it->second;
    const int id = static_cast<int>(g.entities.size());
    entity_ids[phrase] = id;
    g.entities.push_back(phrase);
    return id;
  };
  for (const ScoredFact& sf : cands.facts) {
    const int si = entity_id(sf.fact.subject);
    const int oi = entity_id(sf.fact.object);
    g.fact_endpoints.emplace_back(si, oi);
  }

  const int n = g.node_count();
  const int d_h = encoder.hidden_dim();
  g.nodes.reserve(static_cast<size_t>(n));
  for (const std::string& phrase : g.entities) {
    g.nodes.push_back(
        encoder.encode(tape, vocab.encode(tokenize(phrase)), table));
  }

  const Tensor zero_edge({d_h}, 0.0, false);
  g.edges.assign(static_cast<size_t>(n) * static_cast<size_t>(n), zero_edge);
  g.mask.assign(static_cast<size_t>(n) * static_cast<size_t>(n), 0);

  for (size_t f = 0; f < cands.facts.size(); ++f) {
    const auto [si, oi] = g.fact_endpoints[f];
    if (si == oi) continue;  // self-loops stay masked out
    const FactTriple& t = cands.facts[f].fact;
    std::vector<int> rel_id = {relations.id(t.relation)};
    Tensor rel_rows = ops::embedding_lookup(tape, params.relation_table, rel_id);
    Tensor rel = ops::row(tape, rel_rows, 0);
    Tensor desc = encoder.encode(
        tape, vocab.encode(tokenize(t.description())), table);
    Tensor edge = ops::tanh(
        tape, ops::matmul(tape, params.edge_proj,
                          ops::concat(tape, {rel, desc})));
    // Same feature in both directions; later facts may overwrite an
    // earlier edge between the same pair.
    g.edges[static_cast<size_t>(si) * n + oi] = edge;
    g.edges[static_cast<size_t>(oi) * n + si] = edge;
    g.mask[static_cast<size_t>(si) * n + oi] = 1;
    g.mask[static_cast<size_t>(oi) * n + si] = 1;
  }
  return g;
}

}  // namespace knowdial
