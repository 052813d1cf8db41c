#include "knowdial/data.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "knowdial/text.hpp"

namespace knowdial {

namespace {

using nlohmann::json;

std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

std::string field_path(size_t line, const std::string& field) {
  return "dataset line " + std::to_string(line) + ": $." + field;
}

json instance_to_json(const DialogInstance& inst) {
  json j;
  j["image_id"] = inst.image_id;
  j["caption"] = join(inst.caption);
  json rounds = json::array();
  for (const DialogRound& r : inst.rounds) {
    rounds.push_back({{"question", join(r.question)},
                      {"answer", join(r.answer)}});
  }
  j["rounds"] = rounds;
  j["question"] = join(inst.question);
  json cands = json::array();
  for (const auto& c : inst.candidates) cands.push_back(join(c));
  j["candidates"] = cands;
  j["gt_index"] = inst.gt_index;
  if (!inst.relevance.empty()) j["relevance"] = inst.relevance;
  return j;
}

}  // namespace

void save_dataset(const std::string& path,
                  const std::vector<DialogInstance>& instances) {
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write dataset: " + path);
  }
  for (const DialogInstance& inst : instances) {
    out << instance_to_json(inst).dump() << '\n';
  }
}

std::vector<DialogInstance> load_dataset(const std::string& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError("dataset not readable: " + path);
  }
  std::vector<DialogInstance> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError("dataset line " + std::to_string(lineno) + ": " +
                      e.what());
    }
    auto need = [&](const char* field) -> const json& {
      if (!j.contains(field)) {
        throw DataError(field_path(lineno, field) + ": missing field");
      }
      return j.at(field);
    };

    DialogInstance inst;
    if (!need("image_id").is_string()) {
      throw DataError(field_path(lineno, "image_id") + ": expected string");
    }
    inst.image_id = j["image_id"].get<std::string>();
    inst.caption = tokenize(need("caption").get<std::string>());
    const json& rounds = need("rounds");
    if (!rounds.is_array()) {
      throw DataError(field_path(lineno, "rounds") + ": expected array");
    }
    for (size_t r = 0; r < rounds.size(); ++r) {
      const json& round = rounds[r];
      if (!round.contains("question") || !round.contains("answer")) {
        throw DataError(field_path(lineno, "rounds[" + std::to_string(r) +
                                                "]") +
                        ": round needs question and answer");
      }
      inst.rounds.push_back(
          {tokenize(round["question"].get<std::string>()),
           tokenize(round["answer"].get<std::string>())});
    }
    inst.question = tokenize(need("question").get<std::string>());
    const json& cands = need("candidates");
    if (!cands.is_array() || cands.empty()) {
      throw DataError(field_path(lineno, "candidates") +
                      ": expected non-empty array");
    }
    for (const json& c : cands) {
      inst.candidates.push_back(tokenize(c.get<std::string>()));
    }
    const json& gt = need("gt_index");
    if (!gt.is_number_integer()) {
      throw DataError(field_path(lineno, "gt_index") + ": expected integer");
    }
    inst.gt_index = gt.get<int>();
    if (inst.gt_index < 0 ||
        inst.gt_index >= static_cast<int>(inst.candidates.size())) {
      throw DataError(field_path(lineno, "gt_index") + ": index " +
                      std::to_string(inst.gt_index) + " out of range for " +
                      std::to_string(inst.candidates.size()) + " candidates");
    }
    if (j.contains("relevance")) {
      const json& rel = j["relevance"];
      if (!rel.is_array() || rel.size() != inst.candidates.size()) {
        throw DataError(field_path(lineno, "relevance") +
                        ": expected one value per candidate");
      }
      for (const json& v : rel) {
        const double x = v.get<double>();
        if (x < 0.0 || x > 1.0) {
          throw DataError(field_path(lineno, "relevance") + ": value " +
                          std::to_string(x) + " outside [0, 1]");
        }
        inst.relevance.push_back(x);
      }
    }
    out.push_back(std::move(inst));
  }
  if (out.empty()) {
    std::cerr << "warning: dataset " << path << " contains no instances\n";
  }
  return out;
}

void save_features_json(const std::string& path, const FeatureMap& features) {
  json images = json::array();
  for (const auto& [id, f] : features) {
    json rec;
    rec["id"] = id;
    rec["labels"] = f.labels;
    json rows = json::array();
    for (int i = 0; i < f.n; ++i) {
      json row = json::array();
      for (int c = 0; c < f.dim; ++c) {
        row.push_back(f.features[static_cast<size_t>(i) * f.dim + c]);
      }
      rows.push_back(row);
    }
    rec["features"] = rows;
    if (!f.relations.empty()) {
      rec["relation_dim"] = f.relation_dim;
      json rel = json::array();
      for (const auto& r : f.relations) rel.push_back(r);
      rec["relations"] = rel;
    }
    images.push_back(rec);
  }
  json j;
  j["images"] = images;
  std::ofstream out(path);
  if (!out) {
    throw DataError("cannot write features: " + path);
  }
  out << j.dump(2) << '\n';
}

namespace {

constexpr char kFeatureMagic[4] = {'K', 'D', 'V', 'F'};

template <typename T>
void write_raw(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::ifstream& in, const std::string& what) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw DataError("feature file truncated while reading " + what);
  }
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in, const std::string& what) {
  const auto len = read_raw<std::uint32_t>(in, what);
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) {
    throw DataError("feature file truncated while reading " + what);
  }
  return s;
}

FeatureMap load_features_binary(std::ifstream& in) {
  const auto version = read_raw<std::uint32_t>(in, "version");
  if (version != 1) {
    throw DataError("unsupported feature file version " +
                    std::to_string(version));
  }
  const auto count = read_raw<std::uint32_t>(in, "image count");
  FeatureMap out;
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::string id = read_string(in, "image id");
    ImageFeatures f;
    f.n = static_cast<int>(read_raw<std::uint32_t>(in, "object count"));
    f.dim = static_cast<int>(read_raw<std::uint32_t>(in, "feature dim"));
    f.features.resize(static_cast<size_t>(f.n) * f.dim);
    for (double& v : f.features) v = read_raw<double>(in, "feature value");
    for (int l = 0; l < f.n; ++l) {
      f.labels.push_back(read_string(in, "label"));
    }
    out[id] = std::move(f);
  }
  return out;
}

FeatureMap load_features_json_text(const std::string& path) {
  std::ifstream in(path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw DataError("feature file " + path + ": " + e.what());
  }
  if (!j.contains("images") || !j["images"].is_array()) {
    throw DataError("feature file " + path + ": missing images array");
  }
  FeatureMap out;
  for (const json& rec : j["images"]) {
    if (!rec.contains("id") || !rec.contains("features")) {
      throw DataError("feature file " + path + ": record needs id + features");
    }
    ImageFeatures f;
    const json& rows = rec["features"];
    f.n = static_cast<int>(rows.size());
    if (f.n == 0) {
      throw DataError("feature file " + path + ": empty feature block for " +
                      rec["id"].get<std::string>());
    }
    f.dim = static_cast<int>(rows[0].size());
    for (const json& row : rows) {
      if (static_cast<int>(row.size()) != f.dim) {
        throw DataError("feature file " + path + ": ragged feature rows for " +
                        rec["id"].get<std::string>());
      }
      for (const json& v : row) f.features.push_back(v.get<double>());
    }
    if (rec.contains("labels")) {
      for (const json& l : rec["labels"]) {
        f.labels.push_back(l.get<std::string>());
      }
      if (static_cast<int>(f.labels.size()) != f.n) {
        throw DataError("feature file " + path + ": " +
                        std::to_string(f.labels.size()) + " labels for " +
                        std::to_string(f.n) + " objects");
      }
    }
    if (rec.contains("relations")) {
      f.relation_dim = rec.value("relation_dim", 0);
      for (const json& row : rec["relations"]) {
        std::vector<double> r;
        for (const json& v : row) r.push_back(v.get<double>());
        if (static_cast<int>(r.size()) != f.relation_dim) {
          throw DataError("feature file " + path + ": ragged relation rows");
        }
        f.relations.push_back(std::move(r));
      }
      if (f.relations.size() !=
          static_cast<size_t>(f.n) * static_cast<size_t>(f.n)) {
        throw DataError("feature file " + path + ": relation block must have " +
                        "n*n rows");
      }
    }
    out[rec["id"].get<std::string>()] = std::move(f);
  }
  return out;
}

}  // namespace

void save_features_binary(const std::string& path, const FeatureMap& features) {
  std::ofstream out(path, std::ios::binary);
  if (!out) {
    throw DataError("cannot write features: " + path);
  }
  out.write(kFeatureMagic, 4);
  write_raw<std::uint32_t>(out, 1);
  write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(features.size()));
  for (const auto& [id, f] : features) {
    write_string(out, id);
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(f.n));
    write_raw<std::uint32_t>(out, static_cast<std::uint32_t>(f.dim));
    for (double v : f.features) write_raw<double>(out, v);
    for (const std::string& l : f.labels) write_string(out, l);
  }
}

FeatureMap load_features(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw DataError("feature file not readable: " + path);
  }
  char magic[4] = {};
  if (in.read(magic, 4) && std::memcmp(magic, kFeatureMagic, 4) == 0) {
    return load_features_binary(in);
  }
  return load_features_json_text(path);
}

// ---------------------------------------------------------------------------
// Synthetic world
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& objects_pool() {
  static const std::vector<std::string> kObjects = {
      "dog", "cat",   "cow",  "horse", "sheep", "bird", "fish", "owl",
      "shark", "frog", "bee",  "fox",   "crab",  "bat",  "deer", "goat"};
  return kObjects;
}
constexpr int kHeldoutStart = 10;

const std::vector<std::string>& colors_pool() {
  static const std::vector<std::string> kColors = {
      "red", "blue", "green", "black", "white", "brown", "gray", "yellow"};
  return kColors;
}

const std::vector<std::string>& places_pool() {
  static const std::vector<std::string> kPlaces = {"park",   "farm", "beach",
                                                   "forest", "yard", "street"};
  return kPlaces;
}

const std::vector<std::string>& locations_pool() {
  static const std::vector<std::string> kLocations = {
      "kennel", "tree", "barn", "pond", "nest",
      "reef",   "cave", "den",  "hive", "burrow"};
  return kLocations;
}

const std::vector<std::string>& verbs_pool() {
  static const std::vector<std::string> kVerbs = {
      "running", "swimming", "flying",  "digging", "jumping",
      "climbing", "hunting",  "hiding",  "barking", "singing"};
  return kVerbs;
}

const std::vector<std::string>& filler_pool() {
  static const std::vector<std::string> kFillers = {
      "apple",  "chair",  "cloud",  "stone",  "river",  "window", "bottle",
      "guitar", "candle", "basket", "ladder", "mirror", "pencil", "ticket",
      "wallet", "bridge", "castle", "desert", "engine", "flower", "garden",
      "hammer", "island", "jacket", "kettle", "lantern", "magnet", "needle",
      "orange", "pillow", "quilt",  "rocket", "saddle", "teapot", "umbrella",
      "violin", "whistle", "anchor", "balloon", "camera", "drawer", "easel",
      "fountain", "goblet", "helmet", "icicle", "jigsaw", "kayak",  "lemon",
      "marble", "napkin", "oven",   "puzzle", "quiver", "ribbon", "shovel",
      "tunnel", "urn",    "vase",   "wagon",  "xylophone", "yacht", "zipper",
      "acorn",  "beacon", "cabin",  "dial",   "emerald", "fabric", "gadget",
      "harbor", "ingot",  "jewel",  "kiln",   "locket",  "meadow", "nugget",
      "opal",   "parcel", "quarry", "reel",   "sponge",  "tassel", "ukulele",
      "velvet", "wreath", "yarn",   "zigzag"};
  return kFillers;
}

// Fixed world seed: the object->location mapping and the visual feature
// codebook must agree across independently generated datasets.
constexpr std::uint64_t kWorldSeed = 0x5EEDC0DEull;

const std::vector<int>& home_location_assignment() {
  static const std::vector<int> kAssign = [] {
    Rng rng(kWorldSeed);
    std::vector<int> assign;
    const int n_obj = static_cast<int>(objects_pool().size());
    const int n_loc = static_cast<int>(locations_pool().size());
    std::vector<int> order(static_cast<size_t>(n_obj));
    for (int i = 0; i < n_obj; ++i) order[static_cast<size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng.engine());
    assign.resize(static_cast<size_t>(n_obj));
    for (int i = 0; i < n_obj; ++i) {
      assign[static_cast<size_t>(order[static_cast<size_t>(i)])] = i % n_loc;
    }
    return assign;
  }();
  return kAssign;
}

// Deterministic per-kind and per-color base vectors for one feature dim.
struct Codebook {
  std::vector<std::vector<double>> object_vecs;
  std::vector<std::vector<double>> color_vecs;
};

const Codebook& codebook_for(int dim) {
  static std::map<int, Codebook> cache;
  auto it = cache.find(dim);
  if (it != cache.end()) return it->second;
  Rng rng(kWorldSeed ^ static_cast<std::uint64_t>(dim));
  Codebook cb;
  const int obj_dim = dim - dim / 2;
  const int color_dim = dim / 2;
  for (size_t i = 0; i < objects_pool().size(); ++i) {
    std::vector<double> v(static_cast<size_t>(obj_dim));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    cb.object_vecs.push_back(std::move(v));
  }
  for (size_t i = 0; i < colors_pool().size(); ++i) {
    std::vector<double> v(static_cast<size_t>(color_dim));
    for (double& x : v) x = rng.uniform(-1.0, 1.0);
    cb.color_vecs.push_back(std::move(v));
  }
  return cache.emplace(dim, std::move(cb)).first->second;
}

std::vector<FactTriple> world_store() {
  std::vector<FactTriple> store;
  const auto& objects = objects_pool();
  const auto& assign = home_location_assignment();
  for (size_t i = 0; i < objects.size(); ++i) {
    store.push_back({objects[i], "at_location",
                     locations_pool()[static_cast<size_t>(assign[i])]});
    store.push_back(
        {objects[i], "capable_of", verbs_pool()[i % verbs_pool().size()]});
  }
  // Distractor facts whose words never appear in captions or questions.
  store.push_back({"moon", "related_to", "night"});
  store.push_back({"star", "related_to", "sky"});
  store.push_back({"rain", "related_to", "storm"});
  store.push_back({"snow", "related_to", "winter"});
  return store;
}

struct Scene {
  std::vector<int> object_ids;  // into objects_pool
  std::vector<int> color_ids;   // into colors_pool
  int place_id = 0;
};

std::vector<std::string> make_caption(const Scene& scene) {
  std::vector<std::string> tokens;
  for (size_t i = 0; i < scene.object_ids.size(); ++i) {
    if (i) tokens.push_back("and");
    tokens.push_back("a");
    tokens.push_back(colors_pool()[static_cast<size_t>(scene.color_ids[i])]);
    tokens.push_back(objects_pool()[static_cast<size_t>(scene.object_ids[i])]);
  }
  tokens.push_back("in");
  tokens.push_back("the");
  tokens.push_back(places_pool()[static_cast<size_t>(scene.place_id)]);
  return tokens;
}

// gt plus same-category distractors first, then a mixed filler pool.
struct CandidateDraw {
  std::vector<std::vector<std::string>> candidates;
  int gt_index = 0;
  std::vector<double> relevance;
};

CandidateDraw draw_candidates(const std::string& gt,
                              const std::vector<std::string>& category,
                              int n_candidates, Rng& rng) {
  std::vector<std::string> same;
  for (const std::string& c : category) {
    if (c != gt) same.push_back(c);
  }
  std::shuffle(same.begin(), same.end(), rng.engine());

  std::vector<std::string> other;
  for (const auto* pool :
       {&colors_pool(), &locations_pool(), &places_pool(), &filler_pool()}) {
    for (const std::string& c : *pool) {
      if (c != gt &&
          std::find(category.begin(), category.end(), c) == category.end()) {
        other.push_back(c);
      }
    }
  }
  std::shuffle(other.begin(), other.end(), rng.engine());

  std::vector<std::string> chosen = {gt};
  for (const std::string& c : same) {
    if (static_cast<int>(chosen.size()) >= n_candidates) break;
    chosen.push_back(c);
  }
  for (const std::string& c : other) {
    if (static_cast<int>(chosen.size()) >= n_candidates) break;
    chosen.push_back(c);
  }
  if (static_cast<int>(chosen.size()) < n_candidates) {
    throw DataError("generator: candidate pool smaller than " +
                    std::to_string(n_candidates));
  }
  std::shuffle(chosen.begin(), chosen.end(), rng.engine());

  CandidateDraw out;
  for (const std::string& c : chosen) {
    out.candidates.push_back({c});
    if (c == gt) {
      out.gt_index = static_cast<int>(out.candidates.size()) - 1;
      out.relevance.push_back(1.0);
    } else if (std::find(category.begin(), category.end(), c) !=
               category.end()) {
      out.relevance.push_back(0.25);
    } else {
      out.relevance.push_back(0.0);
    }
  }
  return out;
}

}  // namespace

const std::vector<std::string>& generator_object_pool() {
  return objects_pool();
}

const std::vector<std::string>& generator_heldout_objects() {
  static const std::vector<std::string> kHeldout(
      objects_pool().begin() + kHeldoutStart, objects_pool().end());
  return kHeldout;
}

const std::vector<std::string>& generator_location_pool() {
  return locations_pool();
}

std::string generator_home_location(const std::string& object) {
  const auto& objects = objects_pool();
  for (size_t i = 0; i < objects.size(); ++i) {
    if (objects[i] == object) {
      return locations_pool()[static_cast<size_t>(
          home_location_assignment()[i])];
    }
  }
  throw DataError("generator: unknown object " + object);
}

SyntheticDataset generate_synthetic_dataset(std::uint64_t seed,
                                            const GeneratorSpec& spec) {
  if (spec.n_images < 1 || spec.n_rounds < 1 || spec.n_candidates < 2 ||
      spec.n_objects < 1 || spec.feature_dim < 2) {
    throw DataError("generator: degenerate spec");
  }
  if (spec.n_objects > static_cast<int>(objects_pool().size())) {
    throw DataError("generator: at most " +
                    std::to_string(objects_pool().size()) +
                    " objects per scene");
  }
  Rng rng(seed);
  SyntheticDataset out;
  out.store = world_store();
  const Codebook& cb = codebook_for(spec.feature_dim);
  const int obj_dim = spec.feature_dim - spec.feature_dim / 2;

  const double ratio_total =
      spec.ratio_vision + spec.ratio_history + spec.ratio_commonsense;

  for (int img = 0; img < spec.n_images; ++img) {
    const std::string image_id = "img" + std::to_string(img);

    Scene scene;
    {
      std::vector<int> ids(objects_pool().size());
      for (size_t i = 0; i < ids.size(); ++i) ids[i] = static_cast<int>(i);
      std::shuffle(ids.begin(), ids.end(), rng.engine());
      if (spec.heldout_commonsense) {
        // Guarantee at least one held-out object in the scene.
        bool has_heldout = false;
        for (int i = 0; i < spec.n_objects; ++i) {
          has_heldout = has_heldout || ids[static_cast<size_t>(i)] >= kHeldoutStart;
        }
        if (!has_heldout) {
          ids[0] = kHeldoutStart + rng.uniform_int(
                       static_cast<int>(objects_pool().size()) - kHeldoutStart);
        }
      }
      scene.object_ids.assign(ids.begin(), ids.begin() + spec.n_objects);
      for (int i = 0; i < spec.n_objects; ++i) {
        scene.color_ids.push_back(
            rng.uniform_int(static_cast<int>(colors_pool().size())));
      }
      scene.place_id = rng.uniform_int(static_cast<int>(places_pool().size()));
    }

    ImageFeatures feats;
    feats.n = spec.n_objects;
    feats.dim = spec.feature_dim;
    for (int i = 0; i < spec.n_objects; ++i) {
      feats.labels.push_back(
          objects_pool()[static_cast<size_t>(scene.object_ids[static_cast<size_t>(i)])]);
      const auto& ov = cb.object_vecs[static_cast<size_t>(
          scene.object_ids[static_cast<size_t>(i)])];
      const auto& cv = cb.color_vecs[static_cast<size_t>(
          scene.color_ids[static_cast<size_t>(i)])];
      for (int c = 0; c < obj_dim; ++c) {
        feats.features.push_back(ov[static_cast<size_t>(c)] +
                                 rng.uniform(-0.05, 0.05));
      }
      for (int c = 0; c < spec.feature_dim - obj_dim; ++c) {
        feats.features.push_back(cv[static_cast<size_t>(c)] +
                                 rng.uniform(-0.05, 0.05));
      }
    }
    out.features[image_id] = std::move(feats);

    const std::vector<std::string> caption = make_caption(scene);
    std::vector<DialogRound> rounds;
    int antecedent = 0;  // scene slot whose object "it" refers to

    for (int round = 0; round < spec.n_rounds; ++round) {
      std::string kind;
      if (spec.heldout_commonsense) {
        kind = "commonsense";
      } else {
        const double roll = rng.uniform(0.0, ratio_total);
        kind = roll < spec.ratio_vision ? "vision"
               : roll < spec.ratio_vision + spec.ratio_history ? "history"
                                                               : "commonsense";
      }
      if (kind == "history" && round == 0) {
        kind = "vision";  // no antecedent yet
      }
      int slot = -1;
      if (kind == "commonsense") {
        // Only ask about objects whose facts belong to the allowed pool.
        std::vector<int> eligible;
        for (int i = 0; i < spec.n_objects; ++i) {
          const int oid = scene.object_ids[static_cast<size_t>(i)];
          const bool heldout = oid >= kHeldoutStart;
          if (heldout == spec.heldout_commonsense) eligible.push_back(i);
        }
        if (eligible.empty()) {
          kind = "vision";
        } else {
          slot = eligible[static_cast<size_t>(
              rng.uniform_int(static_cast<int>(eligible.size())))];
        }
      }

      std::vector<std::string> question;
      std::string gt;
      const std::vector<std::string>* category = nullptr;
      if (kind == "vision") {
        slot = rng.uniform_int(spec.n_objects);
        const std::string& obj =
            objects_pool()[static_cast<size_t>(scene.object_ids[static_cast<size_t>(slot)])];
        question = {"what", "color", "is", "the", obj, "?"};
        gt = colors_pool()[static_cast<size_t>(
            scene.color_ids[static_cast<size_t>(slot)])];
        category = &colors_pool();
        antecedent = slot;
      } else if (kind == "history") {
        question = {"what", "color", "is", "it", "?"};
        gt = colors_pool()[static_cast<size_t>(
            scene.color_ids[static_cast<size_t>(antecedent)])];
        category = &colors_pool();
      } else {
        const std::string& obj =
            objects_pool()[static_cast<size_t>(scene.object_ids[static_cast<size_t>(slot)])];
        question = {"where", "could", "the", obj, "be", "found", "?"};
        gt = generator_home_location(obj);
        category = &locations_pool();
        antecedent = slot;
      }

      CandidateDraw draw =
          draw_candidates(gt, *category, spec.n_candidates, rng);

      DialogInstance inst;
      inst.image_id = image_id;
      inst.caption = caption;
      inst.rounds = rounds;
      inst.question = question;
      inst.candidates = std::move(draw.candidates);
      inst.gt_index = draw.gt_index;
      inst.relevance = std::move(draw.relevance);
      out.instances.push_back(std::move(inst));
      out.kinds.push_back(kind);

      std::vector<std::string> answer = {gt};
      answer.push_back(".");
      rounds.push_back({question, answer});
    }
  }
  return out;
}

}  // namespace knowdial
