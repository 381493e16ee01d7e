// cclx — corpus generation, training arms, and evaluation for the twin-language
// cross-lingual training testbed.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "ccl/experiment.hpp"

namespace fs = std::filesystem;
using namespace ccl;

namespace {

ExperimentConfig load_cli_config(const std::string& path,
                                 const std::vector<std::string>& overrides) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config file not found: " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.contains("out_dir")) {
    if (const char* root = std::getenv("CCL_OUT_ROOT")) j["out_dir"] = std::string(root);
  }
  for (const auto& o : overrides) apply_override(j, o);
  return config_from_json(j);
}

ParameterSet load_arm_checkpoint(const std::string& run_dir, const std::string& which) {
  const std::string prefix = run_dir + "/" + which;
  if (!fs::exists(prefix + ".json") || !fs::exists(prefix + ".bin"))
    throw DataError("missing checkpoint " + prefix + ".{json,bin}" +
                    " — run the 'run' command first");
  return load_checkpoint(prefix);
}

std::vector<AnswerDumpEntry> answer_test_set_par(const ParameterSet& params,
                                                 const ExperimentConfig& cfg,
                                                 const CorpusBundle& corpus,
                                                 const std::string& arm, char lang,
                                                 int jobs) {
  if (jobs <= 1) return answer_test_set(params, cfg, corpus, arm, lang);
  const ModelConfig mcfg = effective_model_config(cfg, corpus.vocab);
  DecodeConfig dcfg;
  dcfg.max_new_tokens = cfg.eval.max_new_tokens;
  std::vector<const QAItem*> items;
  for (const auto& it : corpus.qa.test)
    if (it.lang == lang) items.push_back(&it);
  std::vector<AnswerDumpEntry> out(items.size());
  auto worker = [&](std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
      const QAItem& item = *items[i];
      AnswerDumpEntry e;
      e.fact_id = item.fact_id;
      e.arm = arm;
      if (arm == "sft") {
        e.answer_tgt = decode_direct(params, mcfg, corpus.vocab, item.q, dcfg);
      } else {
        XCoTOutput x = decode_xcot(params, mcfg, corpus.vocab, item.q, dcfg);
        e.answer_tgt = x.answer_tgt;
        e.answer_en = x.answer_en;
        e.reasoning_en = x.reasoning_en;
        e.parse_ok = x.parse_ok;
      }
      out[i] = std::move(e);
    }
  };
  std::vector<std::thread> pool;
  const std::size_t chunk = (items.size() + jobs - 1) / jobs;
  for (int t = 0; t < jobs; ++t) {
    const std::size_t b = t * chunk, e = std::min(items.size(), (t + 1) * chunk);
    if (b < e) pool.emplace_back(worker, b, e);
  }
  for (auto& th : pool) th.join();
  return out;
}

int run_eval(const ExperimentConfig& cfg, const std::string& kind,
             std::vector<std::string> arms, bool plot_data, int jobs) {
  const CorpusBundle corpus = load_corpus(cfg);
  if (arms.empty()) arms = arm_names();
  const std::string reports = cfg.out_dir + "/reports";
  fs::create_directories(reports);

  if (kind == "align") {
    for (const auto& arm : arms) {
      const std::string run_dir = cfg.out_dir + "/runs/" + arm;
      ParameterSet params = load_arm_checkpoint(run_dir, "ckpt_final");
      const ModelConfig mcfg = effective_model_config(cfg, corpus.vocab);
      const int n = std::min<int>(cfg.eval.n_alignment_pairs,
                                  static_cast<int>(corpus.eval_pairs.size()));
      AlignmentReport rep = alignment_curve(params, mcfg, corpus.vocab,
                                            corpus.eval_pairs, n);
      write_alignment_csv(reports + "/align_" + arm + ".csv", rep, plot_data);
      std::printf("align %s: final-layer mean_sim=%.4f variance=%.6f (n=%d)\n",
                  arm.c_str(), rep.mean_sim.back(), rep.variance.back(), rep.n_pairs);
    }
    return kExitOk;
  }

  if (kind == "qa") {
    std::vector<ArmLanguageRate> rows;
    for (const auto& arm : arms) {
      const std::string run_dir = cfg.out_dir + "/runs/" + arm;
      ParameterSet params = load_arm_checkpoint(run_dir + "/sft", "ckpt_final");
      for (char lang : {'a', 'b'}) {
        auto dump = answer_test_set_par(params, cfg, corpus, arm, lang, jobs);
        write_answer_dump(run_dir + "/answers_" + std::string(1, lang) + ".jsonl", dump);
        ArmLanguageRate row;
        row.arm = arm;
        row.language = std::string(1, lang);
        row.report = judge_dump(dump, corpus);
        std::printf("qa %s lang=%c: rate=%.3f (free=%d inc=%d fact=%d irr=%d of %d)\n",
                    arm.c_str(), lang, row.report.rate, row.report.free_count,
                    row.report.incomplete, row.report.factual_error,
                    row.report.irrelevant, row.report.total);
        rows.push_back(std::move(row));
      }
    }
    write_rates_csv(reports + "/rates.csv", rows, plot_data);
    return kExitOk;
  }

  if (kind == "consistency") {
    for (const auto& arm : arms) {
      const std::string run_dir = cfg.out_dir + "/runs/" + arm;
      std::map<std::string, std::map<int, std::vector<std::string>>> dumps;
      for (char lang : {'a', 'b'}) {
        const std::string path = run_dir + "/answers_" + std::string(1, lang) + ".jsonl";
        if (!fs::exists(path))
          throw DataError("missing answer dump " + path + " — run 'eval --kind qa' first");
        std::map<int, std::vector<std::string>> per_fact;
        for (const auto& e : read_answer_dump(path))
          per_fact.emplace(e.fact_id, e.answer_tgt);  // first question per fact
        dumps[std::string(1, lang)] = std::move(per_fact);
      }
      ConsistencyMatrix m = consistency_matrix(dumps, corpus.spec);
      write_consistency_csv(reports + "/consistency_" + arm + ".csv", m, plot_data);
      std::printf("consistency %s: a-b agreement=%.3f\n", arm.c_str(), m.entries[0][1]);
    }
    return kExitOk;
  }

  if (kind == "ablate") {
    std::vector<AblateArm> ablate_arms = {{"low", {FreezeSel::kLow}},
                                          {"mid", {FreezeSel::kMid}},
                                          {"high", {FreezeSel::kHigh}},
                                          {"all", {FreezeSel::kAll}}};
    auto rows = ablate_layers(cfg, corpus, ablate_arms);
    write_rates_csv(reports + "/ablate.csv", rows, plot_data);
    for (const auto& r : rows)
      std::printf("ablate %s lang=%s: rate=%.3f\n", r.arm.c_str(), r.language.c_str(),
                  r.report.rate);
    return kExitOk;
  }

  throw ConfigError("unknown eval kind '" + kind + "'");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"twin-language cross-lingual contrastive training testbed"};
  app.require_subcommand(1);

  std::string config_path;
  std::vector<std::string> overrides;
  std::string arm = "ccl-xcot";
  std::string kind = "qa";
  bool plot_data = false;
  int jobs = 1;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--set", overrides, "override config keys, e.g. pretrain.lr=1e-3");
  };

  CLI::App* gen = app.add_subcommand("gen", "generate corpus, QA, and XCoT files");
  add_common(gen);

  CLI::App* run = app.add_subcommand("run", "train one arm of the ablation ladder");
  add_common(run);
  run->add_option("--arm", arm, "sft | xcot | cl-xcot | ccl-xcot")->required();

  CLI::App* ev = app.add_subcommand("eval", "evaluate trained runs");
  add_common(ev);
  ev->add_option("--kind", kind, "align | qa | consistency | ablate");
  std::vector<std::string> eval_arms;
  ev->add_option("--arm", eval_arms, "restrict to specific arms");
  ev->add_flag("--emit-plot-data", plot_data, "write reports in long/tidy format");
  ev->add_option("--jobs", jobs, "parallel workers for read-only QA evaluation");

  CLI::App* ab = app.add_subcommand("ablate", "alias for eval --kind ablate");
  add_common(ab);
  ab->add_flag("--emit-plot-data", plot_data, "write reports in long/tidy format");

  CLI11_PARSE(app, argc, argv);

  try {
    const ExperimentConfig cfg = load_cli_config(config_path, overrides);
    if (gen->parsed()) {
      cmd_gen(cfg);
      std::printf("corpus written to %s\n", corpus_dir(cfg).c_str());
      return kExitOk;
    }
    if (run->parsed()) {
      const auto& arms = arm_names();
      if (std::find(arms.begin(), arms.end(), arm) == arms.end())
        throw ConfigError("unknown arm '" + arm + "'");
      const std::string dir = cmd_run(cfg, arm);
      std::printf("run complete: %s\n", dir.c_str());
      return kExitOk;
    }
    if (ev->parsed()) return run_eval(cfg, kind, eval_arms, plot_data, jobs);
    if (ab->parsed()) return run_eval(cfg, "ablate", {}, plot_data, jobs);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric error: %s\n", e.what());
    return kExitNumeric;
  } catch (const InputError& e) {
    std::fprintf(stderr, "input error: %s\n", e.what());
    return kExitData;
  } catch (const DataError& e) {
    std::fprintf(stderr, "data error: %s\n", e.what());
    return kExitData;
  }
  return kExitOk;
}
