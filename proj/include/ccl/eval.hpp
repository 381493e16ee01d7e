#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccl/corpus.hpp"
#include "ccl/errors.hpp"
#include "ccl/model.hpp"

namespace ccl {

// ---- layer-wise semantic alignment ------------------------------------------

struct AlignmentReport {
  // index 0 = embedding output, 1..n_layers = transformer block outputs
  std::vector<double> mean_sim;
  std::vector<double> variance;  // sample variance over pairs
  int n_pairs = 0;
};

inline double plain_cosine(const std::vector<double>& u, const std::vector<double>& v) {
  double dot = 0.0, su = 0.0, sv = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    dot += u[i] * v[i];
    su += u[i] * u[i];
    sv += v[i] * v[i];
  }
  return dot / (std::sqrt(su + 1e-16) * std::sqrt(sv + 1e-16));
}

// Per layer: embed each side as the mean of that layer's token states, then
// cosine per pair; report mean and sample variance over pairs.
inline AlignmentReport alignment_curve(const ParameterSet& params, const ModelConfig& mcfg,
                                       const Vocab& vocab,
                                       const std::vector<ParallelPair>& pairs, int n) {
  if (n < 2) throw InputError("alignment_curve: need at least 2 pairs");
  if (static_cast<int>(pairs.size()) < n)
    throw InputError("alignment_curve: fewer pairs than requested");
  const int n_levels = mcfg.n_layers + 1;
  std::vector<std::vector<double>> sims(n_levels);

  auto mean_pool = [&](Graph& g, Graph::Var hidden) {
    const Tensor& h = g.value(hidden);
    std::vector<double> m(h.shape[1], 0.0);
    for (int t = 0; t < h.shape[0]; ++t)
      for (int c = 0; c < h.shape[1]; ++c) m[c] += h.at(t, c);
    for (double& x : m) x /= h.shape[0];
    return m;
  };

  for (int i = 0; i < n; ++i) {
    Graph g;
    ParamVars pv = bind_parameters_const(g, params);
    ForwardResult fr = forward(g, pv, mcfg,
                               {vocab.encode(pairs[i].a), vocab.encode(pairs[i].b)}, true);
    for (int l = 0; l < n_levels; ++l) {
      sims[l].push_back(plain_cosine(mean_pool(g, fr.hidden[0][l]),
                                     mean_pool(g, fr.hidden[1][l])));
    }
  }

  AlignmentReport rep;
  rep.n_pairs = n;
  for (int l = 0; l < n_levels; ++l) {
    double mean = 0.0;
    for (double s : sims[l]) mean += s;
    mean /= n;
    double var = 0.0;
    for (double s : sims[l]) var += (s - mean) * (s - mean);
    var /= (n - 1);
    rep.mean_sim.push_back(mean);
    rep.variance.push_back(var);
  }
  return rep;
}

// ---- answer judging ------------------------------------------------------------

enum class Verdict { kHallucinationFree, kIncomplete, kFactualError, kIrrelevant };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::kHallucinationFree: return "hallucination-free";
    case Verdict::kIncomplete: return "incomplete";
    case Verdict::kFactualError: return "factual-error";
    case Verdict::kIrrelevant: return "irrelevant";
  }
  return "?";
}

struct QAJudgment {
  int fact_id = 0;
  Verdict verdict = Verdict::kIrrelevant;
};

// Deterministic exact-match oracle. Answer words are mapped through the
// inverse bijection; the verdict is set-based, so word order never matters.
inline QAJudgment judge_answer(const std::vector<std::string>& answer_tokens, int fact_id,
                               const FactBase& facts, const TwinLanguageSpec& spec) {
  const Fact& f = facts.by_id(fact_id);
  const std::string gold = spec.objects[f.o];
  const std::string subj = spec.subjects[f.s];
  const std::string rel = spec.relations[f.r];

  std::set<std::string> object_words(spec.objects.begin(), spec.objects.end());
  std::set<std::string> same_rel_wrong;
  for (const auto& other : facts.facts)
    if (other.r == f.r && other.o != f.o) same_rel_wrong.insert(spec.objects[other.o]);

  bool has_gold = false, has_wrong = false, has_any_object = false, on_topic = false;
  for (const auto& raw : answer_tokens) {
    const std::string w = spec.canonical(raw);
    if (w == gold) has_gold = true;
    if (same_rel_wrong.count(w)) has_wrong = true;
    if (object_words.count(w)) has_any_object = true;
    if (w == subj || w == rel) on_topic = true;
  }

  QAJudgment j;
  j.fact_id = fact_id;
  if (has_gold && !has_wrong)
    j.verdict = Verdict::kHallucinationFree;
  else if (has_wrong)
    j.verdict = Verdict::kFactualError;
  else if (!has_any_object && on_topic)
    j.verdict = Verdict::kIncomplete;
  else
    j.verdict = Verdict::kIrrelevant;
  return j;
}

struct RateReport {
  double rate = 0.0;
  int free_count = 0;
  int incomplete = 0;
  int factual_error = 0;
  int irrelevant = 0;
  int total = 0;
};

inline RateReport hallucination_free_rate(const std::vector<QAJudgment>& judgments) {
  if (judgments.empty()) throw InputError("hallucination_free_rate: empty input");
  RateReport r;
  r.total = static_cast<int>(judgments.size());
  for (const auto& j : judgments) {
    switch (j.verdict) {
      case Verdict::kHallucinationFree: ++r.free_count; break;
      case Verdict::kIncomplete: ++r.incomplete; break;
      case Verdict::kFactualError: ++r.factual_error; break;
      case Verdict::kIrrelevant: ++r.irrelevant; break;
    }
  }
  r.rate = static_cast<double>(r.free_count) / r.total;
  return r;
}

// Percentile bootstrap over binary outcomes.
struct BootstrapCI {
  double lo = 0.0, hi = 0.0;
};

inline BootstrapCI bootstrap_rate_ci(const std::vector<int>& successes, int resamples,
                                     std::uint64_t seed) {
  if (successes.empty()) throw InputError("bootstrap_rate_ci: empty input");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, successes.size() - 1);
  std::vector<double> rates(resamples);
  for (int r = 0; r < resamples; ++r) {
    int hit = 0;
    for (std::size_t i = 0; i < successes.size(); ++i) hit += successes[pick(rng)];
    rates[r] = static_cast<double>(hit) / successes.size();
  }
  std::sort(rates.begin(), rates.end());
  BootstrapCI ci;
  ci.lo = rates[static_cast<std::size_t>(0.025 * (resamples - 1))];
  ci.hi = rates[static_cast<std::size_t>(0.975 * (resamples - 1))];
  return ci;
}

// ---- answer dumps ---------------------------------------------------------------

struct AnswerDumpEntry {
  int fact_id = 0;
  std::string arm;
  bool parse_ok = true;
  std::vector<std::string> answer_tgt;
  std::vector<std::string> answer_en;
  std::vector<std::string> reasoning_en;
};

inline void write_answer_dump(const std::string& path,
                              const std::vector<AnswerDumpEntry>& entries) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  for (const auto& e : entries) {
    nlohmann::json j;
    j["fact_id"] = e.fact_id;
    j["arm"] = e.arm;
    j["parse_ok"] = e.parse_ok;
    j["answer_tgt"] = e.answer_tgt;
    j["answer_en"] = e.answer_en;
    j["reasoning_en"] = e.reasoning_en;
    out << j.dump() << "\n";
  }
}

inline std::vector<AnswerDumpEntry> read_answer_dump(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("missing answer dump " + path);
  std::vector<AnswerDumpEntry> entries;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      AnswerDumpEntry e;
      e.fact_id = j.at("fact_id").get<int>();
      e.arm = j.at("arm").get<std::string>();
      e.parse_ok = j.at("parse_ok").get<bool>();
      e.answer_tgt = j.at("answer_tgt").get<std::vector<std::string>>();
      e.answer_en = j.at("answer_en").get<std::vector<std::string>>();
      e.reasoning_en = j.at("reasoning_en").get<std::vector<std::string>>();
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw DataError(path + ":" + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return entries;
}

// ---- cross-lingual consistency ----------------------------------------------------

struct ConsistencyMatrix {
  std::vector<std::string> languages;
  std::vector<std::vector<double>> entries;
};

// Answers are canonicalized to the set of base-language object words they
// contain; two languages agree on a question when those sets match exactly.
inline ConsistencyMatrix consistency_matrix(
    const std::map<std::string, std::map<int, std::vector<std::string>>>& dumps,
    const TwinLanguageSpec& spec) {
  if (dumps.size() < 2)
    throw InputError("consistency_matrix: need dumps for at least 2 languages");
  const auto& ref = dumps.begin()->second;
  for (const auto& [lang, answers] : dumps) {
    if (answers.size() != ref.size())
      throw InputError("consistency_matrix: fact_id sets differ across dumps");
    for (const auto& [fid, _] : answers)
      if (!ref.count(fid))
        throw InputError("consistency_matrix: fact_id sets differ across dumps");
  }

  const std::set<std::string> object_words(spec.objects.begin(), spec.objects.end());
  auto canon = [&](const std::vector<std::string>& toks) {
    std::set<std::string> s;
    for (const auto& t : toks) {
      const std::string w = spec.canonical(t);
      if (object_words.count(w)) s.insert(w);
    }
    return s;
  };

  ConsistencyMatrix m;
  for (const auto& [lang, _] : dumps) m.languages.push_back(lang);
  const int L = static_cast<int>(m.languages.size());
  m.entries.assign(L, std::vector<double>(L, 1.0));
  for (int p = 0; p < L; ++p) {
    for (int q = p + 1; q < L; ++q) {
      const auto& dp = dumps.at(m.languages[p]);
      const auto& dq = dumps.at(m.languages[q]);
      int agree = 0;
      for (const auto& [fid, ans_p] : dp)
        if (canon(ans_p) == canon(dq.at(fid))) ++agree;
      const double frac = ref.empty() ? 1.0 : static_cast<double>(agree) / ref.size();
      m.entries[p][q] = frac;
      m.entries[q][p] = frac;
    }
  }
  return m;
}

// ---- CSV reports -------------------------------------------------------------------

namespace detail {
inline std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}
}  // namespace detail

inline void write_alignment_csv(const std::string& path, const AlignmentReport& rep,
                                bool plot_data = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  if (plot_data) {
    out << "metric,layer,value\n";
    for (std::size_t l = 0; l < rep.mean_sim.size(); ++l) {
      out << "mean_sim," << l << "," << detail::fmt_g(rep.mean_sim[l]) << "\n";
      out << "variance," << l << "," << detail::fmt_g(rep.variance[l]) << "\n";
    }
    return;
  }
  out << "layer,mean_sim,variance\n";
  for (std::size_t l = 0; l < rep.mean_sim.size(); ++l)
    out << l << "," << detail::fmt_g(rep.mean_sim[l]) << ","
        << detail::fmt_g(rep.variance[l]) << "\n";
}

struct ArmLanguageRate {
  std::string arm;
  std::string language;
  RateReport report;
};

inline void write_rates_csv(const std::string& path,
                            const std::vector<ArmLanguageRate>& rows,
                            bool plot_data = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  if (plot_data) {
    out << "arm,language,metric,value\n";
    for (const auto& r : rows) {
      out << r.arm << "," << r.language << ",rate," << detail::fmt_g(r.report.rate) << "\n";
      out << r.arm << "," << r.language << ",incomplete," << r.report.incomplete << "\n";
      out << r.arm << "," << r.language << ",factual," << r.report.factual_error << "\n";
      out << r.arm << "," << r.language << ",irrelevant," << r.report.irrelevant << "\n";
    }
    return;
  }
  out << "arm,language,rate,incomplete,factual,irrelevant\n";
  for (const auto& r : rows)
    out << r.arm << "," << r.language << "," << detail::fmt_g(r.report.rate) << ","
        << r.report.incomplete << "," << r.report.factual_error << ","
        << r.report.irrelevant << "\n";
}

inline void write_consistency_csv(const std::string& path, const ConsistencyMatrix& m,
                                  bool plot_data = false) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  if (plot_data) {
    out << "lang_p,lang_q,value\n";
    for (std::size_t p = 0; p < m.languages.size(); ++p)
      for (std::size_t q = 0; q < m.languages.size(); ++q)
        out << m.languages[p] << "," << m.languages[q] << ","
            << detail::fmt_g(m.entries[p][q]) << "\n";
    return;
  }
  out << "lang";
  for (const auto& l : m.languages) out << "," << l;
  out << "\n";
  for (std::size_t p = 0; p < m.languages.size(); ++p) {
    out << m.languages[p];
    for (std::size_t q = 0; q < m.languages.size(); ++q)
      out << "," << detail::fmt_g(m.entries[p][q]);
    out << "\n";
  }
}

}  // namespace ccl
