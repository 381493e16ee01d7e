#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "ccl/corpus.hpp"
#include "ccl/errors.hpp"
#include "ccl/eval.hpp"
#include "ccl/model.hpp"
#include "ccl/objectives.hpp"
#include "ccl/trainer.hpp"
#include "ccl/xcot.hpp"

namespace ccl {

namespace fs = std::filesystem;

// ---- configuration ---------------------------------------------------------

struct CorpusConfig {
  int n_subjects = 50;
  int n_relations = 10;
  int n_objects = 50;
  int n_fillers = 4;
  int n_sentence_pairs = 2000;
  int n_paragraph_pairs = 400;
  int n_eval_pairs = 1000;
  int n_facts = 160;
  double train_fact_ratio = 0.75;
  double filler_prob = 0.25;
};

struct PretrainConfig {
  double lr = 1e-3;
  double clip_norm = 1.0;
  double lambda = 1.0;
  double tau = 0.07;
  int batch_size = 8;
  int stage1_steps = 400;
  int stage2_steps = 120;
  std::set<FreezeSel> freeze = {FreezeSel::kMid};
};

struct FinetuneConfig {
  double lr = 1e-3;
  double clip_norm = 1.0;
  int batch_size = 8;
  int steps = 600;
  std::set<FreezeSel> freeze = {FreezeSel::kAll};
};

struct EvalConfig {
  int n_alignment_pairs = 1000;
  int max_new_tokens = 24;
  int bootstrap_resamples = 1000;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "out";
  CorpusConfig corpus;
  ModelConfig model;
  PretrainConfig pretrain;
  FinetuneConfig finetune;
  EvalConfig eval;
  nlohmann::json resolved;  // the exact document the run used
};

inline FreezeSel freeze_sel_from_name(const std::string& s) {
  if (s == "low") return FreezeSel::kLow;
  if (s == "mid") return FreezeSel::kMid;
  if (s == "high") return FreezeSel::kHigh;
  if (s == "all") return FreezeSel::kAll;
  if (s == "embeddings") return FreezeSel::kEmbeddings;
  if (s == "head") return FreezeSel::kHead;
  throw ConfigError("unknown freeze selection '" + s + "'");
}

inline std::string freeze_sel_name(FreezeSel s) {
  switch (s) {
    case FreezeSel::kLow: return "low";
    case FreezeSel::kMid: return "mid";
    case FreezeSel::kHigh: return "high";
    case FreezeSel::kAll: return "all";
    case FreezeSel::kEmbeddings: return "embeddings";
    case FreezeSel::kHead: return "head";
  }
  return "?";
}

namespace detail {

inline void check_keys(const nlohmann::json& obj, const std::string& where,
                       const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError("config: '" + where + "' must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("config: unknown key '" + where + "." + it.key() + "'");
}

template <typename T>
void get_if(const nlohmann::json& obj, const char* key, T& out) {
  if (obj.contains(key)) {
    try {
      out = obj.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config: bad value for key '") + key + "'");
    }
  }
}

inline void get_freeze(const nlohmann::json& obj, const char* key,
                       std::set<FreezeSel>& out) {
  if (!obj.contains(key)) return;
  std::vector<std::string> names;
  get_if(obj, key, names);
  out.clear();
  for (const auto& n : names) out.insert(freeze_sel_from_name(n));
  if (out.empty()) throw ConfigError(std::string("config: empty '") + key + "'");
}

}  // namespace detail

inline ExperimentConfig config_from_json(const nlohmann::json& j) {
  detail::check_keys(j, "", {"seed", "out_dir", "corpus", "model", "pretrain",
                             "finetune", "eval"});
  ExperimentConfig c;
  detail::get_if(j, "seed", c.seed);
  detail::get_if(j, "out_dir", c.out_dir);
  if (j.contains("corpus")) {
    const auto& o = j.at("corpus");
    detail::check_keys(o, "corpus",
                       {"n_subjects", "n_relations", "n_objects", "n_fillers",
                        "n_sentence_pairs", "n_paragraph_pairs", "n_eval_pairs",
                        "n_facts", "train_fact_ratio", "filler_prob"});
    detail::get_if(o, "n_subjects", c.corpus.n_subjects);
    detail::get_if(o, "n_relations", c.corpus.n_relations);
    detail::get_if(o, "n_objects", c.corpus.n_objects);
    detail::get_if(o, "n_fillers", c.corpus.n_fillers);
    detail::get_if(o, "n_sentence_pairs", c.corpus.n_sentence_pairs);
    detail::get_if(o, "n_paragraph_pairs", c.corpus.n_paragraph_pairs);
    detail::get_if(o, "n_eval_pairs", c.corpus.n_eval_pairs);
    detail::get_if(o, "n_facts", c.corpus.n_facts);
    detail::get_if(o, "train_fact_ratio", c.corpus.train_fact_ratio);
    detail::get_if(o, "filler_prob", c.corpus.filler_prob);
  }
  if (j.contains("model")) {
    const auto& o = j.at("model");
    detail::check_keys(o, "model", {"n_layers", "n_heads", "d_model", "d_ff",
                                    "vocab_size", "max_seq_len", "tie_embeddings"});
    detail::get_if(o, "n_layers", c.model.n_layers);
    detail::get_if(o, "n_heads", c.model.n_heads);
    detail::get_if(o, "d_model", c.model.d_model);
    detail::get_if(o, "d_ff", c.model.d_ff);
    detail::get_if(o, "vocab_size", c.model.vocab_size);
    detail::get_if(o, "max_seq_len", c.model.max_seq_len);
    detail::get_if(o, "tie_embeddings", c.model.tie_embeddings);
  }
  if (j.contains("pretrain")) {
    const auto& o = j.at("pretrain");
    detail::check_keys(o, "pretrain", {"lr", "clip_norm", "lambda", "tau", "batch_size",
                                       "stage1_steps", "stage2_steps", "freeze"});
    detail::get_if(o, "lr", c.pretrain.lr);
    detail::get_if(o, "clip_norm", c.pretrain.clip_norm);
    detail::get_if(o, "lambda", c.pretrain.lambda);
    detail::get_if(o, "tau", c.pretrain.tau);
    detail::get_if(o, "batch_size", c.pretrain.batch_size);
    detail::get_if(o, "stage1_steps", c.pretrain.stage1_steps);
    detail::get_if(o, "stage2_steps", c.pretrain.stage2_steps);
    detail::get_freeze(o, "freeze", c.pretrain.freeze);
  }
  if (j.contains("finetune")) {
    const auto& o = j.at("finetune");
    detail::check_keys(o, "finetune", {"lr", "clip_norm", "batch_size", "steps", "freeze"});
    detail::get_if(o, "lr", c.finetune.lr);
    detail::get_if(o, "clip_norm", c.finetune.clip_norm);
    detail::get_if(o, "batch_size", c.finetune.batch_size);
    detail::get_if(o, "steps", c.finetune.steps);
    detail::get_freeze(o, "freeze", c.finetune.freeze);
  }
  if (j.contains("eval")) {
    const auto& o = j.at("eval");
    detail::check_keys(o, "eval",
                       {"n_alignment_pairs", "max_new_tokens", "bootstrap_resamples"});
    detail::get_if(o, "n_alignment_pairs", c.eval.n_alignment_pairs);
    detail::get_if(o, "max_new_tokens", c.eval.max_new_tokens);
    detail::get_if(o, "bootstrap_resamples", c.eval.bootstrap_resamples);
  }
  c.resolved = j;
  return c;
}

// Dotted-path override, e.g. "pretrain.stage1_steps=200". Values parse as
// JSON first, falling back to a plain string.
inline void apply_override(nlohmann::json& j, const std::string& kv) {
  const std::size_t eq = kv.find('=');
  if (eq == std::string::npos)
    throw ConfigError("override '" + kv + "' must look like key.path=value");
  const std::string path = kv.substr(0, eq);
  const std::string raw = kv.substr(eq + 1);
  nlohmann::json value;
  try {
    value = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception&) {
    value = raw;
  }
  nlohmann::json* at = &j;
  std::istringstream ss(path);
  std::string part;
  std::vector<std::string> parts;
  while (std::getline(ss, part, '.')) parts.push_back(part);
  if (parts.empty()) throw ConfigError("override '" + kv + "': empty key path");
  for (std::size_t i = 0; i + 1 < parts.size(); ++i) at = &((*at)[parts[i]]);
  (*at)[parts.back()] = value;
}

inline ExperimentConfig load_config(const std::string& path,
                                    const std::vector<std::string>& overrides = {}) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

// ---- corpus bundle -----------------------------------------------------------

struct CorpusBundle {
  TwinLanguageSpec spec;
  Vocab vocab;
  FactBase facts;
  std::vector<ParallelPair> sentences;
  std::vector<ParallelPair> paragraphs;
  std::vector<ParallelPair> eval_pairs;  // disjoint from training pairs
  QADataset qa;
  std::vector<std::vector<std::string>> xcot_train;  // serialized token lines
  std::vector<int> xcot_fact_ids;
};

inline TwinLanguageSpec spec_from_config(const ExperimentConfig& cfg) {
  return default_twin_spec(cfg.corpus.n_subjects, cfg.corpus.n_relations,
                           cfg.corpus.n_objects, cfg.corpus.n_fillers,
                           static_cast<int>(cfg.seed));
}

inline CorpusBundle build_corpus(const ExperimentConfig& cfg) {
  CorpusBundle b;
  b.spec = spec_from_config(cfg);
  b.vocab = Vocab::build(b.spec);
  auto all_sentences =
      generate_parallel(b.spec, cfg.corpus.n_sentence_pairs + cfg.corpus.n_eval_pairs,
                        Granularity::kSentence, cfg.corpus.filler_prob);
  b.sentences.assign(all_sentences.begin(),
                     all_sentences.begin() + cfg.corpus.n_sentence_pairs);
  b.eval_pairs.assign(all_sentences.begin() + cfg.corpus.n_sentence_pairs,
                      all_sentences.end());
  b.paragraphs = generate_parallel(b.spec, cfg.corpus.n_paragraph_pairs,
                                   Granularity::kParagraph, cfg.corpus.filler_prob);
  b.facts = build_fact_base(b.spec, cfg.corpus.n_facts, cfg.seed + 11);
  b.qa = generate_qa(b.facts, b.spec, cfg.corpus.train_fact_ratio, cfg.seed + 13);
  std::set<int> train_ids;
  for (const auto& it : b.qa.train_en) train_ids.insert(it.fact_id);
  for (auto& f : b.facts.facts) f.train = train_ids.count(f.id) > 0;
  for (const auto& item : b.qa.train_en) {
    XCoTExample ex = format_xcot(item, b.facts, b.spec);
    b.xcot_train.push_back(serialize_xcot(ex));
    b.xcot_fact_ids.push_back(ex.fact_id);
  }
  return b;
}

inline std::uint64_t fnv1a_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::uint64_t h = 1469598103934665603ULL;
  char ch;
  while (in.get(ch)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string corpus_dir(const ExperimentConfig& cfg) {
  return cfg.out_dir + "/corpus";
}

// Writes corpus/QA/XCoT JSONL files plus a manifest with counts and seed.
inline void cmd_gen(const ExperimentConfig& cfg) {
  const CorpusBundle b = build_corpus(cfg);
  const std::string dir = corpus_dir(cfg);
  fs::create_directories(dir);
  write_pairs_jsonl(dir + "/sentences.jsonl", b.sentences);
  write_pairs_jsonl(dir + "/paragraphs.jsonl", b.paragraphs);
  write_pairs_jsonl(dir + "/eval_pairs.jsonl", b.eval_pairs);
  write_qa_jsonl(dir + "/qa_train.jsonl", b.qa.train_en);
  write_qa_jsonl(dir + "/qa_test.jsonl", b.qa.test);
  {
    std::ofstream out(dir + "/xcot_train.jsonl", std::ios::trunc);
    if (!out) throw DataError("cannot write xcot_train.jsonl");
    for (std::size_t i = 0; i < b.xcot_train.size(); ++i) {
      nlohmann::json j;
      j["fact_id"] = b.xcot_fact_ids[i];
      j["tokens"] = b.xcot_train[i];
      out << j.dump() << "\n";
    }
  }
  {
    std::ofstream out(dir + "/facts.jsonl", std::ios::trunc);
    if (!out) throw DataError("cannot write facts.jsonl");
    for (const auto& f : b.facts.facts) {
      nlohmann::json j;
      j["fact_id"] = f.id;
      j["s"] = b.spec.subjects[f.s];
      j["r"] = b.spec.relations[f.r];
      j["o"] = b.spec.objects[f.o];
      j["split"] = f.train ? "train" : "heldout";
      out << j.dump() << "\n";
    }
  }
  nlohmann::json manifest;
  manifest["seed"] = cfg.seed;
  manifest["counts"] = {{"sentences", b.sentences.size()},
                        {"paragraphs", b.paragraphs.size()},
                        {"eval_pairs", b.eval_pairs.size()},
                        {"qa_train", b.qa.train_en.size()},
                        {"qa_test", b.qa.test.size()},
                        {"xcot_train", b.xcot_train.size()},
                        {"facts", b.facts.facts.size()}};
  manifest["vocab_size"] = b.vocab.size();
  std::ofstream mf(dir + "/manifest.json", std::ios::trunc);
  mf << manifest.dump(2) << "\n";
}

// Rebuilds the bundle from config determinism; the on-disk files are the
// interchange format, checked for presence so `run` fails with a hint.
inline CorpusBundle load_corpus(const ExperimentConfig& cfg) {
  const std::string dir = corpus_dir(cfg);
  for (const char* f : {"sentences.jsonl", "paragraphs.jsonl", "eval_pairs.jsonl",
                        "qa_train.jsonl", "qa_test.jsonl", "xcot_train.jsonl"}) {
    if (!fs::exists(dir + "/" + f))
      throw DataError("missing corpus file " + dir + "/" + f +
                      " — run the 'gen' command first");
  }
  return build_corpus(cfg);
}

inline std::uint64_t corpus_hash(const ExperimentConfig& cfg) {
  std::uint64_t h = 0;
  for (const char* f : {"sentences.jsonl", "paragraphs.jsonl", "qa_train.jsonl",
                        "qa_test.jsonl", "xcot_train.jsonl"})
    h ^= fnv1a_file(corpus_dir(cfg) + "/" + f);
  return h;
}

// ---- training arms ------------------------------------------------------------

inline const std::vector<std::string>& arm_names() {
  static const std::vector<std::string> arms = {"sft", "xcot", "cl-xcot", "ccl-xcot"};
  return arms;
}

inline ModelConfig effective_model_config(const ExperimentConfig& cfg, const Vocab& vocab) {
  ModelConfig m = cfg.model;
  m.vocab_size = vocab.size();
  m.seed = static_cast<int>(cfg.seed);
  m.validate();
  return m;
}

struct ArmResult {
  std::string run_dir;
  ParameterSet params;
  RunRecord pretrain_record;
  RunRecord finetune_record;
};

// One ablation-ladder arm. sft/xcot disable the contrastive term; cl-xcot
// runs the sentence stage only (same total step budget); ccl-xcot is the full
// curriculum. Fine-tuning is direct SFT for the sft arm, XCoT SFT otherwise.
inline ArmResult run_arm(const ExperimentConfig& cfg, const CorpusBundle& corpus,
                         const std::string& arm, const std::string& run_dir,
                         const std::set<FreezeSel>* pretrain_freeze_override = nullptr) {
  const ModelConfig mcfg = effective_model_config(cfg, corpus.vocab);
  const bool contrastive = arm == "cl-xcot" || arm == "ccl-xcot";
  const bool curriculum = arm == "ccl-xcot";
  if (arm != "sft" && arm != "xcot" && !contrastive)
    throw ConfigError("unknown arm '" + arm + "'");
  if (!run_dir.empty()) fs::create_directories(run_dir);

  TrainConfig pt;
  pt.lr = cfg.pretrain.lr;
  pt.clip_norm = cfg.pretrain.clip_norm;
  pt.tau = cfg.pretrain.tau;
  pt.batch_size = cfg.pretrain.batch_size;
  pt.seed = cfg.seed + 101;
  pt.freeze = pretrain_freeze_override ? *pretrain_freeze_override : cfg.pretrain.freeze;
  pt.lambda = cfg.pretrain.lambda;
  if (!contrastive && pt.lambda != 0.0) {
    std::fprintf(stderr, "[ccl] arm '%s' is NTP-only; forcing lambda=0\n", arm.c_str());
    pt.lambda = 0.0;
  }
  pt.phase = contrastive ? "pretrain-ccl" : "pretrain-ntp-only";

  CurriculumSchedule sched;
  if (curriculum || !contrastive) {
    sched.stage1_steps = cfg.pretrain.stage1_steps;
    sched.stage2_steps = cfg.pretrain.stage2_steps;
  } else {
    // sentence-level contrastive only, same total step budget
    sched.stage1_steps = cfg.pretrain.stage1_steps + cfg.pretrain.stage2_steps;
    sched.stage2_steps = 0;
  }

  PretrainData data;
  data.sentences = corpus.sentences;
  data.paragraphs = corpus.paragraphs;
  data.vocab = &corpus.vocab;
  const int n_heldout = std::min<int>(64, static_cast<int>(corpus.eval_pairs.size()));
  for (int i = 0; i < n_heldout; ++i)
    data.heldout.push_back(corpus.vocab.encode(corpus.eval_pairs[i].a));

  ArmResult res;
  res.run_dir = run_dir;
  res.params = init_parameters(mcfg);
  if (!run_dir.empty()) save_checkpoint(run_dir + "/ckpt_base", res.params);
  res.pretrain_record = pretrain(res.params, mcfg, data, sched, pt, run_dir);
  if (!run_dir.empty())
    write_metrics_csv(run_dir + "/pretrain_metrics.csv", res.pretrain_record);

  TrainConfig ft;
  ft.lr = cfg.finetune.lr;
  ft.clip_norm = cfg.finetune.clip_norm;
  ft.batch_size = cfg.finetune.batch_size;
  ft.steps = cfg.finetune.steps;
  ft.seed = cfg.seed + 202;
  ft.freeze = cfg.finetune.freeze;
  ft.phase = arm == "sft" ? "sft" : "sft-xcot";

  std::vector<SftItem> items;
  if (arm == "sft") {
    const int trigger = corpus.vocab.id(kAnsEn);
    for (std::size_t i = 0; i < corpus.qa.train_en.size(); ++i)
      items.push_back(make_sft_item(
          corpus.vocab.encode(serialize_direct(corpus.qa.train_en[i], corpus.spec)),
          trigger, "qa_train.jsonl:" + std::to_string(i + 1)));
  } else {
    const int trigger = corpus.vocab.id(kThinkEn);
    for (std::size_t i = 0; i < corpus.xcot_train.size(); ++i)
      items.push_back(make_sft_item(corpus.vocab.encode(corpus.xcot_train[i]), trigger,
                                    "xcot_train.jsonl:" + std::to_string(i + 1)));
  }
  res.finetune_record = finetune(res.params, mcfg, items, ft,
                                 run_dir.empty() ? "" : run_dir + "/sft");
  if (!run_dir.empty()) {
    write_metrics_csv(run_dir + "/finetune_metrics.csv", res.finetune_record);
    std::ofstream rr(run_dir + "/run_record.json", std::ios::trunc);
    nlohmann::json j;
    j["arm"] = arm;
    j["config"] = cfg.resolved;
    j["corpus_hash"] = corpus_hash(cfg);
    j["heldout_ntp_before"] = res.pretrain_record.heldout_ntp_before;
    j["heldout_ntp_after_stage1"] = res.pretrain_record.heldout_ntp_after_stage1;
    j["heldout_ntp_after"] = res.pretrain_record.heldout_ntp_after;
    j["wall_clock_sec"] =
        res.pretrain_record.wall_clock_sec + res.finetune_record.wall_clock_sec;
    rr << j.dump(2) << "\n";
    std::ofstream cs(run_dir + "/config.json", std::ios::trunc);
    cs << cfg.resolved.dump(2) << "\n";
  }
  return res;
}

inline std::string cmd_run(const ExperimentConfig& cfg, const std::string& arm) {
  const CorpusBundle corpus = load_corpus(cfg);
  const std::string run_dir = cfg.out_dir + "/runs/" + arm;
  run_arm(cfg, corpus, arm, run_dir);
  return run_dir;
}

// ---- evaluation drivers ----------------------------------------------------------

// Answers every test question in `lang` with the given parameters, using XCoT
// decoding unless the arm is plain sft.
inline std::vector<AnswerDumpEntry> answer_test_set(const ParameterSet& params,
                                                    const ExperimentConfig& cfg,
                                                    const CorpusBundle& corpus,
                                                    const std::string& arm, char lang) {
  const ModelConfig mcfg = effective_model_config(cfg, corpus.vocab);
  DecodeConfig dcfg;
  dcfg.max_new_tokens = cfg.eval.max_new_tokens;
  std::vector<AnswerDumpEntry> out;
  for (const auto& item : corpus.qa.test) {
    if (item.lang != lang) continue;
    AnswerDumpEntry e;
    e.fact_id = item.fact_id;
    e.arm = arm;
    if (arm == "sft") {
      e.answer_tgt = decode_direct(params, mcfg, corpus.vocab, item.q, dcfg);
      e.parse_ok = true;
    } else {
      XCoTOutput x = decode_xcot(params, mcfg, corpus.vocab, item.q, dcfg);
      e.answer_tgt = x.answer_tgt;
      e.answer_en = x.answer_en;
      e.reasoning_en = x.reasoning_en;
      e.parse_ok = x.parse_ok;
    }
    out.push_back(std::move(e));
  }
  return out;
}

inline RateReport judge_dump(const std::vector<AnswerDumpEntry>& dump,
                             const CorpusBundle& corpus) {
  std::vector<QAJudgment> js;
  for (const auto& e : dump)
    js.push_back(judge_answer(e.answer_tgt, e.fact_id, corpus.facts, corpus.spec));
  return hallucination_free_rate(js);
}

struct AblateArm {
  std::string name;
  std::set<FreezeSel> freeze;
};

// §-style layer ablation: rerun pretrain+finetune per arm, varying only the
// pretraining freeze selection, and report per-language rates.
inline std::vector<ArmLanguageRate> ablate_layers(const ExperimentConfig& cfg,
                                                  const CorpusBundle& corpus,
                                                  const std::vector<AblateArm>& arms) {
  if (arms.empty()) throw InputError("ablate_layers: no arms given");
  std::vector<ArmLanguageRate> rows;
  for (const auto& arm : arms) {
    ArmResult res = run_arm(cfg, corpus, "ccl-xcot", "", &arm.freeze);
    for (char lang : {'a', 'b'}) {
      auto dump = answer_test_set(res.params, cfg, corpus, "ccl-xcot", lang);
      ArmLanguageRate row;
      row.arm = arm.name;
      row.language = std::string(1, lang);
      row.report = judge_dump(dump, corpus);
      rows.push_back(std::move(row));
    }
  }
  return rows;
}

}  // namespace ccl
