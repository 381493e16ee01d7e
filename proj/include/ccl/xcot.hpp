#pragma once

#include <string>
#include <vector>

#include "ccl/corpus.hpp"
#include "ccl/errors.hpp"
#include "ccl/model.hpp"

namespace ccl {

struct DecodeConfig {
  int max_new_tokens = 24;
};

struct XCoTOutput {
  std::vector<int> raw;  // full sequence including the prompt
  std::vector<std::string> reasoning_en;
  std::vector<std::string> answer_en;
  std::vector<std::string> answer_tgt;
  bool parse_ok = false;
};

// Greedy continuation of a prompt until <eos> or the length cap.
inline std::vector<int> greedy_decode(const ParameterSet& params, const ModelConfig& mcfg,
                                      const Vocab& vocab, std::vector<int> tokens,
                                      const DecodeConfig& dcfg) {
  const int eos = vocab.id(kEos);
  for (int i = 0; i < dcfg.max_new_tokens; ++i) {
    if (static_cast<int>(tokens.size()) >= mcfg.max_seq_len) break;
    Graph g;
    ParamVars pv = bind_parameters_const(g, params);
    ForwardResult fr = forward(g, pv, mcfg, {tokens}, true);
    const Tensor& logits = g.value(fr.logits[0]);
    const int last = logits.shape[0] - 1;
    int best = 0;
    double best_v = logits.at(last, 0);
    for (int v = 1; v < logits.shape[1]; ++v)
      if (logits.at(last, v) > best_v) {
        best_v = logits.at(last, v);
        best = v;
      }
    tokens.push_back(best);
    if (best == eos) break;
  }
  return tokens;
}

// Inverse of serialize_xcot over the generated region. parse_ok requires the
// three sections in order, each nonempty, closed by <eos>; a truncated
// generation keeps whatever sections it produced with parse_ok=false.
inline XCoTOutput parse_xcot(const std::vector<int>& raw, const Vocab& vocab) {
  XCoTOutput out;
  out.raw = raw;
  const int think = vocab.id(kThinkEn), ans_en = vocab.id(kAnsEn),
            ans_tgt = vocab.id(kAnsTgt), eos = vocab.id(kEos);
  int section = 0;  // 0 = before <think_en>, 1 = reasoning, 2 = ans_en, 3 = ans_tgt
  bool saw_eos = false, ordered = true;
  for (int id : raw) {
    if (id == think) {
      ordered = ordered && section == 0;
      section = 1;
    } else if (id == ans_en) {
      ordered = ordered && section == 1;
      section = 2;
    } else if (id == ans_tgt) {
      ordered = ordered && section == 2;
      section = 3;
    } else if (id == eos) {
      saw_eos = true;
      break;
    } else if (section == 1) {
      out.reasoning_en.push_back(vocab.word(id));
    } else if (section == 2) {
      out.answer_en.push_back(vocab.word(id));
    } else if (section == 3) {
      out.answer_tgt.push_back(vocab.word(id));
    }
  }
  out.parse_ok = ordered && section == 3 && saw_eos && !out.reasoning_en.empty() &&
                 !out.answer_en.empty() && !out.answer_tgt.empty();
  return out;
}

// Three-step inference: prompt <q> question <think_en>, then greedy decode and
// parse the sections.
inline XCoTOutput decode_xcot(const ParameterSet& params, const ModelConfig& mcfg,
                              const Vocab& vocab, const std::vector<std::string>& question,
                              const DecodeConfig& dcfg = {}) {
  if (question.empty()) throw InputError("decode_xcot: empty question");
  std::vector<int> prompt = {vocab.id(kQ)};
  for (const auto& w : question) prompt.push_back(vocab.id(w));
  prompt.push_back(vocab.id(kThinkEn));
  return parse_xcot(greedy_decode(params, mcfg, vocab, prompt, dcfg), vocab);
}

// Baseline inference: prompt <q> question <ans_en>, answer is everything up
// to <eos>.
inline std::vector<std::string> decode_direct(const ParameterSet& params,
                                              const ModelConfig& mcfg, const Vocab& vocab,
                                              const std::vector<std::string>& question,
                                              const DecodeConfig& dcfg = {}) {
  if (question.empty()) throw InputError("decode_direct: empty question");
  std::vector<int> prompt = {vocab.id(kQ)};
  for (const auto& w : question) prompt.push_back(vocab.id(w));
  prompt.push_back(vocab.id(kAnsEn));
  const std::size_t prompt_len = prompt.size();
  std::vector<int> raw = greedy_decode(params, mcfg, vocab, std::move(prompt), dcfg);
  std::vector<std::string> answer;
  const int eos = vocab.id(kEos);
  for (std::size_t t = prompt_len; t < raw.size(); ++t) {
    if (raw[t] == eos) break;
    answer.push_back(vocab.word(raw[t]));
  }
  return answer;
}

}  // namespace ccl
