#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <random>
#include <set>

#include "ccl/corpus.hpp"

using namespace ccl;

namespace {
TwinLanguageSpec small_spec(int seed = 3) {
  return default_twin_spec(6, 3, 6, 4, seed);
}
}  // namespace

TEST_CASE("twin language: worked example") {
  TwinLanguageSpec spec = small_spec();
  CHECK(spec.twin("subj0") == "zz_subj0");
  CHECK(spec.canonical("zz_rel2") == "rel2");
  CHECK(spec.canonical("rel2") == "rel2");  // base words pass through
  CHECK(spec.is_twin_word("zz_obj1"));
  CHECK_FALSE(spec.is_twin_word("obj1"));

  Clause c{2, 1, 4, /*filler=*/-1};
  CHECK(render_clause_base(spec, c) ==
        std::vector<std::string>{"subj2", "rel1", "obj4"});
  // word_order {0,2,1}: twin clause reads subject, object, relation
  CHECK(render_clause_twin(spec, c) ==
        std::vector<std::string>{"zz_subj2", "zz_obj4", "zz_rel1"});

  Clause cf{0, 0, 0, /*filler=*/3};
  CHECK(render_clause_base(spec, cf) ==
        std::vector<std::string>{"ask3", "subj0", "rel0", "obj0"});
  CHECK(render_clause_twin(spec, cf) ==
        std::vector<std::string>{"zz_ask3", "zz_subj0", "zz_obj0", "zz_rel0"});
}

TEST_CASE("untwin_clause inverts render_clause_twin") {
  TwinLanguageSpec spec = small_spec();
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> ps(0, 5), pr(0, 2), pf(-1, 3);
  for (int trial = 0; trial < 200; ++trial) {
    Clause c{ps(rng), pr(rng), ps(rng), pf(rng)};
    CHECK(untwin_clause(spec, render_clause_twin(spec, c)) ==
          render_clause_base(spec, c));
  }
  CHECK_THROWS_AS(untwin_clause(spec, {"zz_subj0"}), DataError);
}

TEST_CASE("bijection is invertible over the whole base vocabulary") {
  TwinLanguageSpec spec = small_spec();
  std::set<std::string> images;
  for (const auto& w : spec.base_vocab()) {
    const std::string t = spec.twin(w);
    CHECK(images.insert(t).second);  // injective
    CHECK(spec.canonical(t) == w);   // left inverse
  }
}

TEST_CASE("twin spec validation rejects malformed specs") {
  TwinLanguageSpec bad_order = small_spec();
  bad_order.word_order = {0, 0, 1};
  CHECK_THROWS_AS(bad_order.validate(), ConfigError);

  TwinLanguageSpec missing = small_spec();
  missing.bijection.erase("obj3");
  CHECK_THROWS_AS(missing.validate(), ConfigError);

  TwinLanguageSpec collide = small_spec();
  collide.bijection["subj0"] = collide.bijection["subj1"];
  CHECK_THROWS_AS(collide.validate(), ConfigError);
}

TEST_CASE("vocabulary covers specials, base, and twin words") {
  TwinLanguageSpec spec = small_spec();
  Vocab v = Vocab::build(spec);
  CHECK(v.id(kPad) == 0);
  const int n_base = static_cast<int>(spec.base_vocab().size());
  CHECK(v.size() == static_cast<int>(special_tokens().size()) + 2 * n_base);
  const std::vector<std::string> toks = {kQ, "subj1", "zz_rel0", kEos};
  CHECK(v.decode(v.encode(toks)) == toks);
  CHECK_THROWS_AS(v.id("nonsense"), DataError);
  CHECK_THROWS_AS(v.word(v.size()), DataError);
}

TEST_CASE("generate_parallel: aligned pairs with distinct meanings") {
  TwinLanguageSpec spec = small_spec();
  const int n = 60;
  auto pairs = generate_parallel(spec, n, Granularity::kSentence, 0.25);
  REQUIRE(pairs.size() == static_cast<std::size_t>(n));
  std::set<int> meanings;
  bool saw_filler = false;
  for (const auto& p : pairs) {
    CHECK(p.granularity == Granularity::kSentence);
    CHECK(meanings.insert(p.meaning_id).second);
    CHECK(untwin_clause(spec, p.b) == p.a);  // translation-faithful
    if (p.a.size() == 4) saw_filler = true;
  }
  CHECK(saw_filler);

  // deterministic for a fixed spec seed
  auto again = generate_parallel(spec, n, Granularity::kSentence, 0.25);
  for (int i = 0; i < n; ++i) {
    CHECK(again[i].a == pairs[i].a);
    CHECK(again[i].b == pairs[i].b);
  }
}

TEST_CASE("generate_parallel: paragraphs are 3-6 clauses, clause-wise aligned") {
  TwinLanguageSpec spec = small_spec();
  auto paras = generate_parallel(spec, 30, Granularity::kParagraph, 0.25);
  std::set<std::vector<std::string>> seen;
  for (const auto& p : paras) {
    CHECK(p.granularity == Granularity::kParagraph);
    CHECK(seen.insert(p.a).second);
    // split both sides on <sep> and untwin clause-by-clause
    std::vector<std::vector<std::string>> ca(1), cb(1);
    for (const auto& w : p.a) {
      if (w == kSep)
        ca.emplace_back();
      else
        ca.back().push_back(w);
    }
    for (const auto& w : p.b) {
      if (w == kSep)
        cb.emplace_back();
      else
        cb.back().push_back(w);
    }
    REQUIRE(ca.size() == cb.size());
    CHECK(ca.size() >= 3);
    CHECK(ca.size() <= 6);
    for (std::size_t i = 0; i < ca.size(); ++i)
      CHECK(untwin_clause(spec, cb[i]) == ca[i]);
  }
}

TEST_CASE("generate_parallel: capacity exhaustion raises InputError") {
  TwinLanguageSpec spec = default_twin_spec(2, 2, 2, 2, 1);
  CHECK_THROWS_AS(generate_parallel(spec, 9, Granularity::kSentence), InputError);
  CHECK_NOTHROW(generate_parallel(spec, 8, Granularity::kSentence));
}

TEST_CASE("make_batches: arithmetic, alignment, and determinism") {
  TwinLanguageSpec spec = small_spec();
  Vocab v = Vocab::build(spec);
  auto pairs = generate_parallel(spec, 53, Granularity::kSentence, 0.0);
  auto batches = make_batches(pairs, v, 8, 99);
  CHECK(batches.size() == 6);  // 53 / 8, ragged tail dropped
  std::map<int, std::vector<std::string>> by_meaning;
  for (const auto& p : pairs) by_meaning[p.meaning_id] = p.a;
  for (const auto& b : batches) {
    REQUIRE(b.a.size() == 8);
    REQUIRE(b.b.size() == 8);
    REQUIRE(b.meaning_ids.size() == 8);
    for (int k = 0; k < 8; ++k)
      CHECK(v.decode(b.a[k]) == by_meaning.at(b.meaning_ids[k]));
  }
  auto batches2 = make_batches(pairs, v, 8, 99);
  for (std::size_t i = 0; i < batches.size(); ++i)
    CHECK(batches[i].meaning_ids == batches2[i].meaning_ids);
  CHECK_THROWS_AS(make_batches(pairs, v, 0, 1), InputError);
}

TEST_CASE("fact base has unique (subject, relation) keys") {
  TwinLanguageSpec spec = small_spec();
  FactBase fb = build_fact_base(spec, 15, 4);
  REQUIRE(fb.facts.size() == 15);
  fb.validate();
  CHECK(fb.by_id(7).id == 7);
  CHECK_THROWS_AS(fb.by_id(99), InputError);
  CHECK_THROWS_AS(build_fact_base(spec, 19, 4), InputError);  // > 6*3 keys
  FactBase dup = fb;
  dup.facts.push_back(dup.facts[0]);
  dup.facts.back().id = 100;
  CHECK_THROWS_AS(dup.validate(), DataError);
}

TEST_CASE("QA generation: disjoint surface forms and both test languages") {
  TwinLanguageSpec spec = small_spec();
  FactBase fb = build_fact_base(spec, 15, 4);
  QADataset ds = generate_qa(fb, spec, 0.75, 21);

  REQUIRE_FALSE(ds.train_en.empty());
  REQUIRE_FALSE(ds.test.empty());
  std::set<std::vector<std::string>> train_surfaces;
  for (const auto& it : ds.train_en) {
    CHECK(it.lang == 'a');
    REQUIRE(it.q.size() == 3);
    CHECK((it.q[0] == "ask0" || it.q[0] == "ask1"));  // first-half templates
    train_surfaces.insert(it.q);
  }
  std::set<char> langs;
  std::set<int> train_ids, test_only_ids;
  for (const auto& it : ds.train_en) train_ids.insert(it.fact_id);
  for (const auto& it : ds.test) {
    langs.insert(it.lang);
    CHECK(train_surfaces.count(it.q) == 0);
    const std::string head = spec.canonical(it.q[0]);
    CHECK((head == "ask2" || head == "ask3"));  // second-half templates
    CHECK(it.control == (train_ids.count(it.fact_id) == 0));
    if (it.control) test_only_ids.insert(it.fact_id);
  }
  CHECK(langs == std::set<char>{'a', 'b'});
  CHECK_FALSE(test_only_ids.empty());

  TwinLanguageSpec one_filler = default_twin_spec(6, 3, 6, 1, 3);
  CHECK_THROWS_AS(generate_qa(fb, one_filler, 0.75, 21), ConfigError);
  CHECK_THROWS_AS(generate_qa(fb, spec, 0.0, 21), InputError);
  CHECK_THROWS_AS(generate_qa(fb, spec, 1.0, 21), InputError);
}

TEST_CASE("XCoT serialization: worked example and section order") {
  TwinLanguageSpec spec = small_spec();
  FactBase fb;
  Fact f;
  f.id = 0;
  f.s = 1;
  f.r = 2;
  f.o = 3;
  fb.facts.push_back(f);

  QAItem item;
  item.q = {"zz_ask2", "zz_subj1", "zz_rel2"};
  item.gold = "obj3";
  item.lang = 'b';
  item.fact_id = 0;

  XCoTExample ex = format_xcot(item, fb, spec);
  CHECK(serialize_xcot(ex) ==
        std::vector<std::string>{kQ, "zz_ask2", "zz_subj1", "zz_rel2", kThinkEn,
                                 "subj1", "rel2", "obj3", kAnsEn, "obj3", kAnsTgt,
                                 "zz_obj3", kEos});

  QAItem item_a = item;
  item_a.q = {"ask2", "subj1", "rel2"};
  item_a.lang = 'a';
  XCoTExample ex_a = format_xcot(item_a, fb, spec);
  CHECK(ex_a.question_tgt ==
        std::vector<std::string>{"zz_ask2", "zz_subj1", "zz_rel2"});

  CHECK(serialize_direct(item_a, spec) ==
        std::vector<std::string>{kQ, "ask2", "subj1", "rel2", kAnsEn, "obj3", kEos});
  CHECK(serialize_direct(item, spec) ==
        std::vector<std::string>{kQ, "zz_ask2", "zz_subj1", "zz_rel2", kAnsEn,
                                 "zz_obj3", kEos});
}

TEST_CASE("JSONL round trips preserve pairs and QA items") {
  TwinLanguageSpec spec = small_spec();
  auto pairs = generate_parallel(spec, 20, Granularity::kSentence, 0.25);
  const std::string dir = std::filesystem::temp_directory_path().string();
  const std::string pp = dir + "/ccl_test_pairs.jsonl";
  write_pairs_jsonl(pp, pairs);
  auto back = read_pairs_jsonl(pp);
  REQUIRE(back.size() == pairs.size());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    CHECK(back[i].a == pairs[i].a);
    CHECK(back[i].b == pairs[i].b);
    CHECK(back[i].meaning_id == pairs[i].meaning_id);
    CHECK(back[i].granularity == pairs[i].granularity);
  }

  FactBase fb = build_fact_base(spec, 15, 4);
  QADataset ds = generate_qa(fb, spec, 0.75, 21);
  const std::string qp = dir + "/ccl_test_qa.jsonl";
  write_qa_jsonl(qp, ds.test);
  auto qback = read_qa_jsonl(qp);
  REQUIRE(qback.size() == ds.test.size());
  for (std::size_t i = 0; i < qback.size(); ++i) {
    CHECK(qback[i].q == ds.test[i].q);
    CHECK(qback[i].gold == ds.test[i].gold);
    CHECK(qback[i].lang == ds.test[i].lang);
    CHECK(qback[i].fact_id == ds.test[i].fact_id);
  }
  CHECK_THROWS_AS(read_pairs_jsonl(dir + "/ccl_no_such_file.jsonl"), DataError);
  std::remove(pp.c_str());
  std::remove(qp.c_str());
}
