#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccl/checkpoint.hpp"
#include "ccl/corpus.hpp"
#include "ccl/errors.hpp"
#include "ccl/graph.hpp"
#include "ccl/model.hpp"
#include "ccl/objectives.hpp"

namespace ccl {

struct TrainConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double clip_norm = 1.0;
  double lambda = 1.0;  // weight of the contrastive term; 0 = plain NTP
  double tau = 0.07;
  int steps = 0;
  int batch_size = 8;
  std::uint64_t seed = 0;
  std::set<FreezeSel> freeze = {FreezeSel::kAll};
  std::string phase = "pretrain-ccl";

  void validate() const {
    if (lr <= 0.0) throw ConfigError("TrainConfig: learning rate must be > 0");
    if (clip_norm <= 0.0) throw ConfigError("TrainConfig: clip norm must be > 0");
    if (steps < 0) throw ConfigError("TrainConfig: steps must be >= 0");
    if (batch_size < 1) throw ConfigError("TrainConfig: batch size must be >= 1");
    if (lambda < 0.0) throw ConfigError("TrainConfig: lambda must be >= 0");
    if (tau <= 0.0) throw ConfigError("TrainConfig: tau must be > 0");
  }
};

struct AdamState {
  std::map<std::string, Tensor> m;
  std::map<std::string, Tensor> v;
  long t = 0;
};

// Global-norm clip over trainable gradients, then Adam on trainable
// parameters only. Frozen parameters and their moments are never touched.
inline void apply_update(ParameterSet& params, const std::map<std::string, Tensor>& grads,
                         const std::map<std::string, bool>& trainable, AdamState& state,
                         const TrainConfig& cfg, int step_index = -1) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    if (!trainable.at(name)) continue;
    for (double v : g.data) {
      if (!std::isfinite(v))
        throw NumericError("apply_update: NaN gradient in '" + name + "' at step " +
                           std::to_string(step_index));
      sq += v * v;
    }
  }
  const double norm = std::sqrt(sq);
  const double scale = norm > cfg.clip_norm ? cfg.clip_norm / norm : 1.0;

  ++state.t;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));
  for (auto& [name, p] : params) {
    if (!trainable.at(name)) continue;
    const Tensor& g = grads.at(name);
    Tensor& m = state.m.try_emplace(name, zeros_like(p)).first->second;
    Tensor& v = state.v.try_emplace(name, zeros_like(p)).first->second;
    for (std::size_t i = 0; i < p.data.size(); ++i) {
      const double gi = g.data[i] * scale;
      m.data[i] = cfg.beta1 * m.data[i] + (1.0 - cfg.beta1) * gi;
      v.data[i] = cfg.beta2 * v.data[i] + (1.0 - cfg.beta2) * gi * gi;
      const double mhat = m.data[i] / bc1;
      const double vhat = v.data[i] / bc2;
      p.data[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
    }
  }
}

struct StepRecord {
  int step = 0;
  std::string phase;
  int stage = 0;
  LossBreakdown loss;
};

struct RunRecord {
  std::vector<StepRecord> steps;
  std::vector<std::string> checkpoints;
  double heldout_ntp_before = 0.0;
  double heldout_ntp_after_stage1 = 0.0;
  double heldout_ntp_after = 0.0;
  double wall_clock_sec = 0.0;
};

inline void write_metrics_csv(const std::string& path, const RunRecord& rec) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << "step,phase,stage,ntp,contrastive,total\n";
  char buf[96];
  for (const auto& s : rec.steps) {
    std::snprintf(buf, sizeof(buf), "%.17g,%.17g,%.17g", s.loss.ntp, s.loss.contrastive,
                  s.loss.total);
    out << s.step << "," << s.phase << "," << s.stage << "," << buf << "\n";
  }
}

// Shift-by-one language-modeling targets over a raw sequence.
inline void lm_targets(const std::vector<int>& tokens, std::vector<int>& targets,
                       std::vector<bool>& mask) {
  const int L = static_cast<int>(tokens.size());
  targets.assign(L, 0);
  mask.assign(L, false);
  for (int t = 0; t + 1 < L; ++t) {
    targets[t] = tokens[t + 1];
    mask[t] = true;
  }
}

// NTP loss of a fixed parameter snapshot on a monolingual stream (no grads).
inline double eval_ntp(const ParameterSet& params, const ModelConfig& mcfg,
                       const std::vector<std::vector<int>>& seqs) {
  if (seqs.empty()) throw InputError("eval_ntp: empty stream");
  Graph g;
  ParamVars pv = bind_parameters_const(g, params);
  ForwardResult fr = forward(g, pv, mcfg, seqs, true);
  std::vector<std::vector<int>> targets(seqs.size());
  std::vector<std::vector<bool>> masks(seqs.size());
  for (std::size_t s = 0; s < seqs.size(); ++s) lm_targets(seqs[s], targets[s], masks[s]);
  return g.value(ntp_loss(g, fr.logits, targets, masks)).data[0];
}

struct PretrainData {
  std::vector<ParallelPair> sentences;
  std::vector<ParallelPair> paragraphs;
  const Vocab* vocab = nullptr;
  std::vector<std::vector<int>> heldout;  // monolingual stream for the forgetting guard
};

// Continued pretraining: joint NTP + contrastive objective under the two-stage
// curriculum. NTP runs over the batch's own sequences in both languages.
inline RunRecord pretrain(ParameterSet& params, const ModelConfig& mcfg,
                          const PretrainData& data, const CurriculumSchedule& sched,
                          const TrainConfig& cfg, const std::string& out_dir = "") {
  cfg.validate();
  if (sched.stage2_steps > 0 && data.paragraphs.empty())
    throw ConfigError("pretrain: stage2_steps > 0 but no paragraph pairs supplied");
  if (sched.stage1_steps > 0 && data.sentences.empty())
    throw ConfigError("pretrain: stage1_steps > 0 but no sentence pairs supplied");

  const auto t0 = std::chrono::steady_clock::now();
  const LayerSegments seg = LayerSegments::thirds(mcfg.n_layers);
  const auto trainable = freeze_mask(params, seg, cfg.freeze);
  AdamState opt;
  RunRecord rec;
  if (!data.heldout.empty()) rec.heldout_ntp_before = eval_ntp(params, mcfg, data.heldout);

  auto batches_s = make_batches(data.sentences, *data.vocab, cfg.batch_size, cfg.seed);
  auto batches_p = data.paragraphs.empty()
                       ? std::vector<ParallelBatch>{}
                       : make_batches(data.paragraphs, *data.vocab, cfg.batch_size,
                                      cfg.seed + 1);
  if (sched.stage1_steps > 0 && batches_s.empty())
    throw ConfigError("pretrain: too few sentence pairs for batch size");
  if (sched.stage2_steps > 0 && batches_p.empty())
    throw ConfigError("pretrain: too few paragraph pairs for batch size");

  std::size_t cursor_s = 0, cursor_p = 0;
  const int total_steps = sched.stage1_steps + sched.stage2_steps;
  for (int step = 0; step < total_steps; ++step) {
    const StageDescriptor stage = curriculum_step(sched, step);
    const ParallelBatch& batch =
        stage.stage == 1 ? batches_s[cursor_s++ % batches_s.size()]
                         : batches_p[cursor_p++ % batches_p.size()];

    Graph g;
    ParamVars pv = bind_parameters(g, params);
    std::vector<std::vector<int>> all_seqs = batch.a;
    all_seqs.insert(all_seqs.end(), batch.b.begin(), batch.b.end());
    ForwardResult fr = forward(g, pv, mcfg, all_seqs, true);

    std::vector<std::vector<int>> targets(all_seqs.size());
    std::vector<std::vector<bool>> masks(all_seqs.size());
    for (std::size_t s = 0; s < all_seqs.size(); ++s)
      lm_targets(all_seqs[s], targets[s], masks[s]);
    Graph::Var ntp = ntp_loss(g, fr.logits, targets, masks);

    const int T = static_cast<int>(batch.a.size());
    std::vector<Graph::Var> emb_a, emb_b;
    for (int i = 0; i < T; ++i) {
      std::vector<bool> real_a(all_seqs[i].size(), true);
      std::vector<bool> real_b(all_seqs[T + i].size(), true);
      emb_a.push_back(sentence_embedding(g, fr.hidden[i].back(), stage.embedding_mode,
                                         real_a));
      emb_b.push_back(sentence_embedding(g, fr.hidden[T + i].back(),
                                         stage.embedding_mode, real_b));
    }
    Graph::Var contr = contrastive_loss(g, emb_a, emb_b, cfg.tau);
    Graph::Var total = g.add(ntp, g.scalar_mul(contr, cfg.lambda));
    g.backward(total);

    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : pv) grads[name] = g.grad(var);
    apply_update(params, grads, trainable, opt, cfg, step);

    StepRecord sr;
    sr.step = step;
    sr.phase = cfg.phase;
    sr.stage = stage.stage;
    sr.loss = joint_loss(g.value(ntp).data[0], g.value(contr).data[0], cfg.lambda);
    rec.steps.push_back(sr);

    const bool stage_boundary = step + 1 == sched.stage1_steps;
    if (stage_boundary) {
      if (!data.heldout.empty())
        rec.heldout_ntp_after_stage1 = eval_ntp(params, mcfg, data.heldout);
      if (!out_dir.empty()) {
        const std::string p = out_dir + "/ckpt_stage1";
        save_checkpoint(p, params);
        rec.checkpoints.push_back(p);
      }
    }
  }
  if (!data.heldout.empty()) {
    rec.heldout_ntp_after = eval_ntp(params, mcfg, data.heldout);
    if (sched.stage2_steps == 0) rec.heldout_ntp_after_stage1 = rec.heldout_ntp_after;
  }
  if (!out_dir.empty()) {
    const std::string p = out_dir + "/ckpt_final";
    save_checkpoint(p, params);
    rec.checkpoints.push_back(p);
  }
  rec.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

struct SftItem {
  std::vector<int> tokens;
  std::vector<int> targets;
  std::vector<bool> loss_mask;
};

// Builds the fine-tuning view of a serialized instruction sequence. Loss
// covers the tokens generated after `trigger_id` (<ans_en> for direct SFT,
// <think_en> for XCoT), never the question span.
inline SftItem make_sft_item(const std::vector<int>& tokens, int trigger_id,
                             const std::string& where) {
  int trigger_pos = -1;
  for (std::size_t t = 0; t < tokens.size(); ++t)
    if (tokens[t] == trigger_id) {
      trigger_pos = static_cast<int>(t);
      break;
    }
  if (trigger_pos < 0 || trigger_pos + 1 >= static_cast<int>(tokens.size()))
    throw DataError("malformed instruction example at " + where +
                    ": missing response section");
  SftItem item;
  item.tokens = tokens;
  lm_targets(tokens, item.targets, item.loss_mask);
  for (int t = 0; t < trigger_pos; ++t) item.loss_mask[t] = false;
  return item;
}

// Instruction fine-tuning over pre-built SFT items.
inline RunRecord finetune(ParameterSet& params, const ModelConfig& mcfg,
                          const std::vector<SftItem>& items, const TrainConfig& cfg,
                          const std::string& out_dir = "") {
  cfg.validate();
  if (items.empty()) throw InputError("finetune: empty instruction set");
  if (cfg.phase != "sft" && cfg.phase != "sft-xcot")
    throw ConfigError("finetune: phase must be sft or sft-xcot, got " + cfg.phase);

  const auto t0 = std::chrono::steady_clock::now();
  const LayerSegments seg = LayerSegments::thirds(mcfg.n_layers);
  const auto trainable = freeze_mask(params, seg, cfg.freeze);
  AdamState opt;
  RunRecord rec;
  std::mt19937_64 rng(cfg.seed);
  std::vector<int> order(items.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);
  std::shuffle(order.begin(), order.end(), rng);
  std::size_t cursor = 0;

  for (int step = 0; step < cfg.steps; ++step) {
    std::vector<std::vector<int>> seqs;
    std::vector<std::vector<int>> targets;
    std::vector<std::vector<bool>> masks;
    for (int k = 0; k < cfg.batch_size; ++k) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), rng);
        cursor = 0;
      }
      const SftItem& it = items[order[cursor++]];
      seqs.push_back(it.tokens);
      targets.push_back(it.targets);
      masks.push_back(it.loss_mask);
    }
    Graph g;
    ParamVars pv = bind_parameters(g, params);
    ForwardResult fr = forward(g, pv, mcfg, seqs, true);
    Graph::Var loss = ntp_loss(g, fr.logits, targets, masks);
    g.backward(loss);
    std::map<std::string, Tensor> grads;
    for (const auto& [name, var] : pv) grads[name] = g.grad(var);
    apply_update(params, grads, trainable, opt, cfg, step);

    StepRecord sr;
    sr.step = step;
    sr.phase = cfg.phase;
    sr.stage = 0;
    sr.loss = joint_loss(g.value(loss).data[0], 0.0, 0.0);
    rec.steps.push_back(sr);
  }
  if (!out_dir.empty()) {
    const std::string p = out_dir + "/ckpt_final";
    save_checkpoint(p, params);
    rec.checkpoints.push_back(p);
  }
  rec.wall_clock_sec =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return rec;
}

}  // namespace ccl
