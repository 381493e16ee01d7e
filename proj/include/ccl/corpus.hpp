#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "ccl/errors.hpp"

namespace ccl {

// ---- special tokens --------------------------------------------------------

inline constexpr const char* kPad = "<pad>";
inline constexpr const char* kQ = "<q>";
inline constexpr const char* kThinkEn = "<think_en>";
inline constexpr const char* kAnsEn = "<ans_en>";
inline constexpr const char* kAnsTgt = "<ans_tgt>";
inline constexpr const char* kEos = "<eos>";
inline constexpr const char* kSep = "<sep>";

inline const std::vector<std::string>& special_tokens() {
  static const std::vector<std::string> s = {kPad, kQ, kThinkEn, kAnsEn,
                                             kAnsTgt, kEos, kSep};
  return s;
}

// ---- twin language ----------------------------------------------------------

// Language A is the base ("high-resource") language; language B is its twin:
// a bijective word relabeling plus a fixed reordering of the three clause
// roles (subject, relation, object). Role indices: 0=S, 1=R, 2=O.
struct TwinLanguageSpec {
  std::vector<std::string> subjects;
  std::vector<std::string> relations;
  std::vector<std::string> objects;
  std::vector<std::string> fillers;  // question/surface words, never part of a fact
  std::map<std::string, std::string> bijection;  // base word -> twin word
  std::array<int, 3> word_order = {0, 2, 1};     // twin clause = roles in this order
  int seed = 0;

  std::vector<std::string> base_vocab() const {
    std::vector<std::string> v;
    v.insert(v.end(), subjects.begin(), subjects.end());
    v.insert(v.end(), relations.begin(), relations.end());
    v.insert(v.end(), objects.begin(), objects.end());
    v.insert(v.end(), fillers.begin(), fillers.end());
    return v;
  }

  void validate() const {
    std::array<bool, 3> seen = {false, false, false};
    for (int r : word_order) {
      if (r < 0 || r > 2 || seen[r])
        throw ConfigError("TwinLanguageSpec: word_order must permute {S,R,O}");
      seen[r] = true;
    }
    std::set<std::string> images;
    for (const std::string& w : base_vocab()) {
      auto it = bijection.find(w);
      if (it == bijection.end())
        throw ConfigError("TwinLanguageSpec: bijection missing word '" + w + "'");
      if (!images.insert(it->second).second)
        throw ConfigError("TwinLanguageSpec: bijection collides on '" + it->second + "'");
    }
  }

  const std::string& twin(const std::string& base_word) const {
    auto it = bijection.find(base_word);
    if (it == bijection.end())
      throw DataError("TwinLanguageSpec: unknown base word '" + base_word + "'");
    return it->second;
  }

  // Inverse bijection; words outside the twin image (base words, specials)
  // pass through unchanged.
  std::string canonical(const std::string& word) const {
    ensure_inverse();
    auto it = inverse_.find(word);
    return it == inverse_.end() ? word : it->second;
  }

  bool is_twin_word(const std::string& word) const {
    ensure_inverse();
    return inverse_.count(word) > 0;
  }

 private:
  mutable std::unordered_map<std::string, std::string> inverse_;
  void ensure_inverse() const {
    if (inverse_.empty())
      for (const auto& [a, b] : bijection) inverse_[b] = a;
  }
};

inline TwinLanguageSpec default_twin_spec(int n_subjects, int n_relations,
                                          int n_objects, int n_fillers, int seed) {
  auto mint = [](const char* stem, int n) {
    std::vector<std::string> out;
    for (int i = 0; i < n; ++i) out.push_back(stem + std::to_string(i));
    return out;
  };
  TwinLanguageSpec spec;
  spec.subjects = mint("subj", n_subjects);
  spec.relations = mint("rel", n_relations);
  spec.objects = mint("obj", n_objects);
  spec.fillers = mint("ask", n_fillers);
  spec.seed = seed;
  for (const std::string& w : spec.base_vocab()) spec.bijection[w] = "zz_" + w;
  spec.validate();
  return spec;
}

// ---- vocabulary --------------------------------------------------------------

struct Vocab {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> index;

  static Vocab build(const TwinLanguageSpec& spec) {
    Vocab v;
    auto put = [&v](const std::string& w) {
      if (v.index.emplace(w, static_cast<int>(v.words.size())).second)
        v.words.push_back(w);
    };
    for (const auto& s : special_tokens()) put(s);
    for (const auto& w : spec.base_vocab()) put(w);
    for (const auto& w : spec.base_vocab()) put(spec.twin(w));
    return v;
  }

  int id(const std::string& w) const {
    auto it = index.find(w);
    if (it == index.end()) throw DataError("Vocab: unknown word '" + w + "'");
    return it->second;
  }

  const std::string& word(int id) const {
    if (id < 0 || id >= static_cast<int>(words.size()))
      throw DataError("Vocab: id out of range");
    return words[id];
  }

  int size() const { return static_cast<int>(words.size()); }

  std::vector<int> encode(const std::vector<std::string>& toks) const {
    std::vector<int> ids;
    ids.reserve(toks.size());
    for (const auto& t : toks) ids.push_back(id(t));
    return ids;
  }

  std::vector<std::string> decode(const std::vector<int>& ids) const {
    std::vector<std::string> toks;
    toks.reserve(ids.size());
    for (int i : ids) toks.push_back(word(i));
    return toks;
  }
};

// ---- clauses and parallel pairs ----------------------------------------------

struct Clause {
  int s = 0, r = 0, o = 0;
  int filler = -1;  // index into spec.fillers, or -1
};

inline std::vector<std::string> render_clause_base(const TwinLanguageSpec& spec,
                                                   const Clause& c) {
  std::vector<std::string> t;
  if (c.filler >= 0) t.push_back(spec.fillers[c.filler]);
  t.push_back(spec.subjects[c.s]);
  t.push_back(spec.relations[c.r]);
  t.push_back(spec.objects[c.o]);
  return t;
}

inline std::vector<std::string> render_clause_twin(const TwinLanguageSpec& spec,
                                                   const Clause& c) {
  const std::array<std::string, 3> roles = {spec.subjects[c.s], spec.relations[c.r],
                                            spec.objects[c.o]};
  std::vector<std::string> t;
  if (c.filler >= 0) t.push_back(spec.twin(spec.fillers[c.filler]));
  for (int k = 0; k < 3; ++k) t.push_back(spec.twin(roles[spec.word_order[k]]));
  return t;
}

// Inverse of render_clause_twin: recovers the base-order clause tokens.
inline std::vector<std::string> untwin_clause(const TwinLanguageSpec& spec,
                                              const std::vector<std::string>& twin) {
  if (twin.size() != 3 && twin.size() != 4)
    throw DataError("untwin_clause: clause must have 3 or 4 tokens");
  std::vector<std::string> base;
  std::size_t k = 0;
  if (twin.size() == 4) base.push_back(spec.canonical(twin[k++]));
  std::array<std::string, 3> roles;
  for (int p = 0; p < 3; ++p) roles[spec.word_order[p]] = spec.canonical(twin[k++]);
  for (const auto& w : roles) base.push_back(w);
  return base;
}

enum class Granularity { kSentence, kParagraph };

inline const char* granularity_name(Granularity g) {
  return g == Granularity::kSentence ? "sentence" : "paragraph";
}

struct ParallelPair {
  std::vector<std::string> a;  // base-language tokens
  std::vector<std::string> b;  // twin-language tokens
  Granularity granularity = Granularity::kSentence;
  int meaning_id = 0;
};

// n aligned pairs with pairwise-distinct meanings. A sentence is a single
// (S,R,O) clause, optionally prefixed by a surface filler word (the filler is
// not part of the meaning). A paragraph is 3-6 clauses joined by <sep>,
// translated clause-wise.
inline std::vector<ParallelPair> generate_parallel(const TwinLanguageSpec& spec, int n,
                                                   Granularity granularity,
                                                   double filler_prob = 0.25) {
  if (n < 1) throw InputError("generate_parallel: n must be >= 1");
  spec.validate();
  const int S = static_cast<int>(spec.subjects.size());
  const int R = static_cast<int>(spec.relations.size());
  const int O = static_cast<int>(spec.objects.size());
  const std::int64_t capacity = static_cast<std::int64_t>(S) * R * O;
  std::mt19937_64 rng(static_cast<std::uint64_t>(spec.seed) * 1000003ULL +
                      (granularity == Granularity::kSentence ? 1 : 2));
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<int> pick_filler(0, std::max(0, static_cast<int>(spec.fillers.size()) - 1));

  auto maybe_filler = [&]() {
    return (!spec.fillers.empty() && coin(rng) < filler_prob) ? pick_filler(rng) : -1;
  };
  auto clause_of = [&](std::int64_t triple) {
    Clause c;
    c.o = static_cast<int>(triple % O);
    c.r = static_cast<int>((triple / O) % R);
    c.s = static_cast<int>(triple / (static_cast<std::int64_t>(O) * R));
    return c;
  };

  std::vector<ParallelPair> out;
  if (granularity == Granularity::kSentence) {
    if (n > capacity)
      throw InputError("generate_parallel: n exceeds distinct-meaning capacity");
    std::vector<std::int64_t> triples(capacity);
    for (std::int64_t i = 0; i < capacity; ++i) triples[i] = i;
    std::shuffle(triples.begin(), triples.end(), rng);
    for (int i = 0; i < n; ++i) {
      Clause c = clause_of(triples[i]);
      c.filler = maybe_filler();
      ParallelPair p;
      p.a = render_clause_base(spec, c);
      p.b = render_clause_twin(spec, c);
      p.granularity = Granularity::kSentence;
      p.meaning_id = static_cast<int>(triples[i]);
      out.push_back(std::move(p));
    }
  } else {
    std::uniform_int_distribution<int> n_clauses(3, 6);
    std::uniform_int_distribution<std::int64_t> pick_triple(0, capacity - 1);
    std::set<std::vector<std::int64_t>> seen;
    int meaning_id = 0;
    int attempts = 0;
    while (static_cast<int>(out.size()) < n) {
      if (++attempts > 50 * n + 1000)
        throw InputError("generate_parallel: n exceeds distinct-meaning capacity");
      const int k = n_clauses(rng);
      std::vector<std::int64_t> key;
      std::set<std::int64_t> used;
      while (static_cast<int>(key.size()) < k) {
        std::int64_t t = pick_triple(rng);
        if (used.insert(t).second) key.push_back(t);
      }
      if (!seen.insert(key).second) continue;
      ParallelPair p;
      p.granularity = Granularity::kParagraph;
      p.meaning_id = meaning_id++;
      for (std::size_t ci = 0; ci < key.size(); ++ci) {
        Clause c = clause_of(key[ci]);
        c.filler = maybe_filler();
        auto ta = render_clause_base(spec, c);
        auto tb = render_clause_twin(spec, c);
        if (ci) {
          p.a.push_back(kSep);
          p.b.push_back(kSep);
        }
        p.a.insert(p.a.end(), ta.begin(), ta.end());
        p.b.insert(p.b.end(), tb.begin(), tb.end());
      }
      out.push_back(std::move(p));
    }
  }
  return out;
}

// ---- batching -----------------------------------------------------------------

struct ParallelBatch {
  std::vector<std::vector<int>> a;  // token ids, ragged
  std::vector<std::vector<int>> b;
  std::vector<int> meaning_ids;
  Granularity granularity = Granularity::kSentence;
};

inline std::vector<ParallelBatch> make_batches(const std::vector<ParallelPair>& pairs,
                                               const Vocab& vocab, int batch_size,
                                               std::uint64_t seed) {
  if (batch_size < 1) throw InputError("make_batches: batch size must be >= 1");
  std::vector<int> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<ParallelBatch> batches;
  for (std::size_t at = 0; at + batch_size <= order.size(); at += batch_size) {
    ParallelBatch b;
    for (int k = 0; k < batch_size; ++k) {
      const ParallelPair& p = pairs[order[at + k]];
      b.a.push_back(vocab.encode(p.a));
      b.b.push_back(vocab.encode(p.b));
      b.meaning_ids.push_back(p.meaning_id);
      b.granularity = p.granularity;
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---- facts and QA ---------------------------------------------------------------

struct Fact {
  int id = 0;
  int s = 0, r = 0, o = 0;
  bool train = true;  // injected into the English instruction set
};

struct FactBase {
  std::vector<Fact> facts;

  const Fact& by_id(int id) const {
    for (const auto& f : facts)
      if (f.id == id) return f;
    throw InputError("FactBase: unknown fact_id " + std::to_string(id));
  }

  void validate() const {
    std::set<std::pair<int, int>> keys;
    for (const auto& f : facts)
      if (!keys.insert({f.s, f.r}).second)
        throw DataError("FactBase: duplicate (subject, relation) key");
  }
};

// Unique (subject, relation) keys, objects assigned at random.
inline FactBase build_fact_base(const TwinLanguageSpec& spec, int n_facts,
                                std::uint64_t seed) {
  const int S = static_cast<int>(spec.subjects.size());
  const int R = static_cast<int>(spec.relations.size());
  if (n_facts < 1 || n_facts > S * R)
    throw InputError("build_fact_base: n_facts out of range");
  std::vector<int> keys(S * R);
  for (int i = 0; i < S * R; ++i) keys[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(keys.begin(), keys.end(), rng);
  std::uniform_int_distribution<int> pick_obj(0, static_cast<int>(spec.objects.size()) - 1);
  FactBase fb;
  for (int i = 0; i < n_facts; ++i) {
    Fact f;
    f.id = i;
    f.s = keys[i] / R;
    f.r = keys[i] % R;
    f.o = pick_obj(rng);
    fb.facts.push_back(f);
  }
  fb.validate();
  return fb;
}

struct QAItem {
  std::vector<std::string> q;  // question tokens
  std::string gold;            // gold object word, base-language form
  char lang = 'a';
  int fact_id = 0;
  bool control = false;  // test question about a fact never seen in training
};

struct QADataset {
  std::vector<QAItem> train_en;  // English instruction items (knowledge injection)
  std::vector<QAItem> test;      // twin + base questions, unseen surface forms
};

// Question surface = [filler, subject, relation]. Train items use the first
// half of the filler inventory, test items the second half, so no test
// question's surface form ever appears in training.
inline QADataset generate_qa(const FactBase& facts, const TwinLanguageSpec& spec,
                             double split_ratio, std::uint64_t seed) {
  if (facts.facts.empty()) throw InputError("generate_qa: empty fact base");
  if (spec.fillers.size() < 2)
    throw ConfigError("generate_qa: need >= 2 filler words for disjoint templates");
  const int n_fillers = static_cast<int>(spec.fillers.size());
  const int n_train_tpl = n_fillers / 2;

  std::vector<int> order(facts.facts.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const int n_train =
      static_cast<int>(split_ratio * static_cast<double>(facts.facts.size()));
  if (n_train < 1 || n_train >= static_cast<int>(facts.facts.size()))
    throw InputError("generate_qa: split produces an empty train or test side");

  auto question = [&spec](const Fact& f, int tpl, char lang) {
    std::vector<std::string> q = {spec.fillers[tpl], spec.subjects[f.s],
                                  spec.relations[f.r]};
    if (lang == 'b')
      for (auto& w : q) w = spec.twin(w);
    return q;
  };

  QADataset ds;
  std::vector<Fact> shuffled;
  for (int idx : order) shuffled.push_back(facts.facts[idx]);
  for (std::size_t i = 0; i < shuffled.size(); ++i) {
    const Fact& f = shuffled[i];
    const bool is_train = static_cast<int>(i) < n_train;
    if (is_train) {
      for (int tpl = 0; tpl < n_train_tpl; ++tpl) {
        QAItem item;
        item.q = question(f, tpl, 'a');
        item.gold = spec.objects[f.o];
        item.lang = 'a';
        item.fact_id = f.id;
        ds.train_en.push_back(std::move(item));
      }
    }
    for (int tpl = n_train_tpl; tpl < n_fillers; ++tpl) {
      for (char lang : {'b', 'a'}) {
        QAItem item;
        item.q = question(f, tpl, lang);
        item.gold = spec.objects[f.o];
        item.lang = lang;
        item.fact_id = f.id;
        item.control = !is_train;
        ds.test.push_back(std::move(item));
      }
    }
  }

  std::set<std::vector<std::string>> train_surfaces;
  for (const auto& it : ds.train_en) train_surfaces.insert(it.q);
  for (const auto& it : ds.test)
    if (train_surfaces.count(it.q))
      throw DataError("generate_qa: test question surface appears in training");
  return ds;
}

// ---- XCoT formatting --------------------------------------------------------------

struct XCoTExample {
  std::vector<std::string> question_tgt;
  std::vector<std::string> reasoning_en;
  std::vector<std::string> answer_en;
  std::vector<std::string> answer_tgt;
  std::string gold_object;
  int fact_id = 0;
};

// Three-step template: the reasoning restates the question in the base
// language and recalls the fact; the answer is then given in both languages.
inline XCoTExample format_xcot(const QAItem& item, const FactBase& facts,
                               const TwinLanguageSpec& spec) {
  const Fact& f = facts.by_id(item.fact_id);
  XCoTExample ex;
  ex.fact_id = item.fact_id;
  ex.gold_object = spec.objects[f.o];
  ex.question_tgt = item.q;
  if (item.lang == 'a')
    for (auto& w : ex.question_tgt) w = spec.twin(w);
  ex.reasoning_en = {spec.subjects[f.s], spec.relations[f.r], spec.objects[f.o]};
  ex.answer_en = {spec.objects[f.o]};
  ex.answer_tgt = {spec.twin(spec.objects[f.o])};
  return ex;
}

inline std::vector<std::string> serialize_xcot(const XCoTExample& ex) {
  std::vector<std::string> t;
  t.push_back(kQ);
  t.insert(t.end(), ex.question_tgt.begin(), ex.question_tgt.end());
  t.push_back(kThinkEn);
  t.insert(t.end(), ex.reasoning_en.begin(), ex.reasoning_en.end());
  t.push_back(kAnsEn);
  t.insert(t.end(), ex.answer_en.begin(), ex.answer_en.end());
  t.push_back(kAnsTgt);
  t.insert(t.end(), ex.answer_tgt.begin(), ex.answer_tgt.end());
  t.push_back(kEos);
  return t;
}

inline std::vector<std::string> serialize_direct(const QAItem& item,
                                                 const TwinLanguageSpec& spec) {
  std::vector<std::string> t;
  t.push_back(kQ);
  t.insert(t.end(), item.q.begin(), item.q.end());
  t.push_back(kAnsEn);
  t.push_back(item.lang == 'b' ? spec.twin(item.gold) : item.gold);
  t.push_back(kEos);
  return t;
}

// ---- JSONL files -------------------------------------------------------------------

inline void write_pairs_jsonl(const std::string& path,
                              const std::vector<ParallelPair>& pairs) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& p : pairs) {
    nlohmann::json j;
    j["a"] = p.a;
    j["b"] = p.b;
    j["granularity"] = granularity_name(p.granularity);
    j["meaning_id"] = p.meaning_id;
    out << j.dump() << "\n";
  }
}

inline std::vector<ParallelPair> read_pairs_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing corpus file " + path);
  std::vector<ParallelPair> pairs;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      ParallelPair p;
      p.a = j.at("a").get<std::vector<std::string>>();
      p.b = j.at("b").get<std::vector<std::string>>();
      p.granularity = j.at("granularity").get<std::string>() == "paragraph"
                          ? Granularity::kParagraph
                          : Granularity::kSentence;
      p.meaning_id = j.at("meaning_id").get<int>();
      pairs.push_back(std::move(p));
    } catch (const nlohmann::json::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return pairs;
}

inline void write_qa_jsonl(const std::string& path, const std::vector<QAItem>& items) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& it : items) {
    nlohmann::json j;
    j["q"] = it.q;
    j["gold"] = it.gold;
    j["lang"] = std::string(1, it.lang);
    j["fact_id"] = it.fact_id;
    out << j.dump() << "\n";
  }
}

inline std::vector<QAItem> read_qa_jsonl(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing QA file " + path);
  std::vector<QAItem> items;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      QAItem it;
      it.q = j.at("q").get<std::vector<std::string>>();
      it.gold = j.at("gold").get<std::string>();
      it.lang = j.at("lang").get<std::string>().at(0);
      it.fact_id = j.at("fact_id").get<int>();
      items.push_back(std::move(it));
    } catch (const std::exception& e) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return items;
}

}  // namespace ccl
