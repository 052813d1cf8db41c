#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "knowdial/text.hpp"
#include "oracles.hpp"

using namespace knowdial;

namespace {

std::vector<std::vector<std::string>> repeat_doc(const std::string& word,
                                                 int times) {
  std::vector<std::vector<std::string>> docs;
  for (int i = 0; i < times; ++i) docs.push_back({word});
  return docs;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits punctuation") {
  auto toks = tokenize("Hello, World! is it 2-ply?");
  std::vector<std::string> want = {"hello", ",", "world", "!", "is",
                                   "it",    "2", "-",     "ply", "?"};
  CHECK(toks == want);
  CHECK(tokenize("   ").empty());
}

TEST_CASE("vocabulary keeps tokens at or above the frequency floor") {
  auto docs = repeat_doc("cat", 6);
  auto dogs = repeat_doc("dog", 2);
  docs.insert(docs.end(), dogs.begin(), dogs.end());
  Vocabulary v = Vocabulary::build(docs, 5);
  CHECK(v.contains("cat"));
  CHECK(!v.contains("dog"));
  CHECK(v.id("dog") == Vocabulary::kUnk);
  CHECK(v.id("cat") == 2);  // first slot after the reserved ids
  CHECK(v.token(Vocabulary::kPad) == "<pad>");
  CHECK(v.token(Vocabulary::kUnk) == "<unk>");
}

TEST_CASE("vocabulary rejects bad corpora") {
  CHECK_THROWS_AS(Vocabulary::build({}, 1), TextError);
  CHECK_THROWS_AS(Vocabulary::build({{"ok", ""}}, 1), TextError);
}

TEST_CASE("vocabulary id order matches an independent frequency count") {
  std::vector<std::vector<std::string>> corpus = {
      tokenize("the cat sat on the mat"),
      tokenize("the dog sat near a cat"),
      tokenize("a bird saw the cat and the dog"),
  };
  Vocabulary v = Vocabulary::build(corpus, 1);

  std::map<std::string, int> counts;
  for (const auto& doc : corpus) {
    for (const auto& tok : doc) ++counts[tok];
  }
  std::vector<std::pair<std::string, int>> sorted(counts.begin(), counts.end());
  std::stable_sort(sorted.begin(), sorted.end(),
                   [](const auto& a, const auto& b) {
                     if (a.second != b.second) return a.second > b.second;
                     return a.first < b.first;
                   });
  REQUIRE(v.size() == static_cast<int>(sorted.size()) + 2);
  for (size_t i = 0; i < sorted.size(); ++i) {
    CHECK(v.id(sorted[i].first) == static_cast<int>(i) + 2);
  }
}

TEST_CASE("pad_or_truncate") {
  std::vector<int> long_ids(25);
  for (int i = 0; i < 25; ++i) long_ids[i] = i + 2;
  auto t = pad_or_truncate(long_ids, 20);
  REQUIRE(t.size() == 20);
  CHECK(t.front() == 2);
  CHECK(t.back() == 21);

  auto p = pad_or_truncate({2, 3, 4, 5, 6}, 20);
  REQUIRE(p.size() == 20);
  CHECK(p[4] == 6);
  for (int i = 5; i < 20; ++i) CHECK(p[i] == Vocabulary::kPad);

  std::vector<int> exact(20, 7);
  CHECK(pad_or_truncate(exact, 20) == exact);

  CHECK_THROWS_AS(pad_or_truncate({1}, 0), TextError);
}

TEST_CASE("all-PAD input encodes to the zero vector") {
  Rng rng(1);
  EmbeddingTable table(6, 3, rng);
  RecurrentEncoder enc(3, 4, rng);
  Tape tape;
  std::vector<int> pads(5, Vocabulary::kPad);
  Tensor h = enc.encode(tape, pads, table);
  for (int i = 0; i < 4; ++i) CHECK(h.values()[i] == 0.0);
}

TEST_CASE("padding never changes the encoding") {
  Rng rng(2);
  EmbeddingTable table(8, 3, rng);
  RecurrentEncoder enc(3, 5, rng);
  Tape tape;
  std::vector<int> one = {4};
  std::vector<int> padded = {4, Vocabulary::kPad, Vocabulary::kPad};
  Tensor a = enc.encode(tape, one, table);
  Tensor b = enc.encode(tape, padded, table);
  CHECK(a.values() == b.values());

  for (int len = 1; len <= 4; ++len) {
    std::vector<int> ids;
    for (int i = 0; i < len; ++i) ids.push_back(2 + i);
    Tensor base = enc.encode(tape, ids, table);
    std::vector<int> extended = ids;
    extended.insert(extended.end(), 3, Vocabulary::kPad);
    Tensor ext = enc.encode(tape, extended, table);
    CHECK(base.values() == ext.values());
  }
}

TEST_CASE("encoder rejects out-of-range ids") {
  Rng rng(3);
  EmbeddingTable table(4, 2, rng);
  RecurrentEncoder enc(2, 3, rng);
  Tape tape;
  std::vector<int> bad = {2, 9};
  CHECK_THROWS_AS(enc.encode(tape, bad, table), TextError);
}

TEST_CASE("encoder matches a step-by-step recurrence oracle") {
  const int d_emb = 2, d_h = 3;
  Rng rng(4);
  EmbeddingTable table(5, d_emb, rng);
  RecurrentEncoder enc(d_emb, d_h, rng);

  // Overwrite every gate parameter with small hand-set values so the
  // oracle and the encoder share exactly the same numbers.
  auto params = enc.parameters();
  REQUIRE(params.size() == 12);
  double fill = 0.01;
  for (Tensor& p : params) {
    for (double& v : p.values()) {
      v = fill;
      fill += 0.013;
      if (fill > 0.2) fill = -0.17;
    }
  }

  oracle::LstmCellWeights w;
  w.in = d_emb;
  w.hidden = d_h;
  w.wi = params[0].values();
  w.ui = params[1].values();
  w.bi = params[2].values();
  w.wf = params[3].values();
  w.uf = params[4].values();
  w.bf = params[5].values();
  w.wo = params[6].values();
  w.uo = params[7].values();
  w.bo = params[8].values();
  w.wg = params[9].values();
  w.ug = params[10].values();
  w.bg = params[11].values();

  std::vector<int> ids = {2, 4, 3};
  std::vector<double> h(d_h, 0.0), c(d_h, 0.0);
  for (int id : ids) {
    oracle::lstm_step(w, table.lookup_raw(id), h, c);
  }

  Tape tape;
  Tensor got = enc.encode(tape, ids, table);
  for (int i = 0; i < d_h; ++i) {
    CHECK(std::abs(got.values()[i] - h[static_cast<size_t>(i)]) < 1e-10);
  }
}

TEST_CASE("gradients reach only the used embedding rows") {
  Rng rng(5);
  EmbeddingTable table(6, 3, rng);
  RecurrentEncoder enc(3, 4, rng);
  Tape tape;
  std::vector<int> ids = {2, 4};
  Tensor h = enc.encode(tape, ids, table);
  Tensor loss = ops::sum(tape, h);
  tape.backward(loss);

  auto row_norm = [&](int r) {
    double acc = 0.0;
    for (int c = 0; c < 3; ++c) {
      acc += std::abs(table.table.grad()[static_cast<size_t>(r) * 3 + c]);
    }
    return acc;
  };
  CHECK(row_norm(2) > 0.0);
  CHECK(row_norm(4) > 0.0);
  CHECK(row_norm(0) == 0.0);
  CHECK(row_norm(1) == 0.0);
  CHECK(row_norm(3) == 0.0);
  CHECK(row_norm(5) == 0.0);
}

TEST_CASE("hidden states stay inside the unit box") {
  Rng rng(6);
  EmbeddingTable table(30, 4, rng);
  RecurrentEncoder enc(4, 8, rng);
  Tape tape;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<int> ids;
    const int len = 1 + rng.uniform_int(12);
    for (int i = 0; i < len; ++i) ids.push_back(rng.uniform_int(30));
    Tensor h = enc.encode(tape, ids, table);
    for (double v : h.values()) {
      CHECK(std::isfinite(v));
      CHECK(std::abs(v) < 1.0);
    }
  }
}

TEST_CASE("pretrained embedding rows overwrite the random init") {
  Rng rng(7);
  Vocabulary v = Vocabulary::build({{"cat", "dog", "cat"}}, 1);
  EmbeddingTable table(v.size(), 3, rng);

  const char* path = "test_embeddings.txt";
  {
    std::ofstream out(path);
    out << "cat 1.0 2.0 3.0\n";
    out << "elephant 9.0 9.0 9.0\n";
  }
  CHECK(table.load_pretrained(path, v) == 1);
  auto row = table.lookup_raw(v.id("cat"));
  CHECK(row == std::vector<double>{1.0, 2.0, 3.0});

  {
    std::ofstream out(path);
    out << "cat 1.0\n";
  }
  CHECK_THROWS_AS(table.load_pretrained(path, v), TextError);
  std::remove(path);
}
