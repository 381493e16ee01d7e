#pragma once

#include <string>
#include <vector>

#include "ccl/errors.hpp"
#include "ccl/graph.hpp"
#include "ccl/model.hpp"

namespace ccl {

struct ContrastiveConfig {
  double temperature = 0.07;
  EmbeddingMode embedding_mode = EmbeddingMode::kFinalHiddenState;
};

struct CurriculumSchedule {
  int stage1_steps = 0;  // sentence pairs, final-hidden-state embeddings
  int stage2_steps = 0;  // paragraph pairs, mean-pooled embeddings
};

struct StageDescriptor {
  int stage = 1;
  Granularity granularity = Granularity::kSentence;
  EmbeddingMode embedding_mode = EmbeddingMode::kFinalHiddenState;
};

inline StageDescriptor curriculum_step(const CurriculumSchedule& sched, int global_step) {
  if (global_step < 0 || global_step >= sched.stage1_steps + sched.stage2_steps)
    throw InputError("curriculum_step: step " + std::to_string(global_step) +
                     " outside schedule");
  StageDescriptor d;
  if (global_step < sched.stage1_steps) {
    d.stage = 1;
    d.granularity = Granularity::kSentence;
    d.embedding_mode = EmbeddingMode::kFinalHiddenState;
  } else {
    d.stage = 2;
    d.granularity = Granularity::kParagraph;
    d.embedding_mode = EmbeddingMode::kMeanPool;
  }
  return d;
}

struct LossBreakdown {
  double ntp = 0.0;
  double contrastive = 0.0;
  double total = 0.0;
  double lambda = 1.0;
};

inline LossBreakdown joint_loss(double ntp, double contrastive, double lambda = 1.0) {
  if (lambda < 0.0) throw ConfigError("joint_loss: lambda must be >= 0");
  LossBreakdown b;
  b.ntp = ntp;
  b.contrastive = contrastive;
  b.lambda = lambda;
  b.total = ntp + lambda * contrastive;
  return b;
}

// Mean cross-entropy over the positions where target_mask is set. logits[s]
// is the {L_s, vocab} output of forward(); targets[s][t] is the token that
// position t should predict.
inline Graph::Var ntp_loss(Graph& g, const std::vector<Graph::Var>& logits,
                           const std::vector<std::vector<int>>& targets,
                           const std::vector<std::vector<bool>>& target_mask) {
  if (logits.size() != targets.size() || logits.size() != target_mask.size())
    throw InputError("ntp_loss: batch size mismatch");
  Graph::Var total = g.constant(Tensor::scalar(0.0));
  int count = 0;
  for (std::size_t s = 0; s < logits.size(); ++s) {
    const Tensor& lv = g.value(logits[s]);
    const int L = lv.shape[0], V = lv.shape[1];
    if (static_cast<int>(targets[s].size()) != L ||
        static_cast<int>(target_mask[s].size()) != L)
      throw InputError("ntp_loss: targets/mask length mismatch");
    Tensor pick({L, V});
    bool any = false;
    for (int t = 0; t < L; ++t) {
      if (!target_mask[s][t]) continue;
      if (targets[s][t] < 0 || targets[s][t] >= V)
        throw InputError("ntp_loss: target id out of range");
      pick.at(t, targets[s][t]) = 1.0;
      ++count;
      any = true;
    }
    if (!any) continue;
    Graph::Var logp = g.log_(g.softmax(logits[s]));
    total = g.add(total, g.sum_all(g.mul(logp, g.constant(pick))));
  }
  if (count == 0) throw InputError("ntp_loss: no unmasked target positions");
  return g.scalar_mul(total, -1.0 / count);
}

// Bidirectional in-batch contrastive loss over aligned sequence embeddings:
// for each i, -log softmax_j(sim(a_i, b_j)/tau) at j=i plus the symmetric
// b->a term, averaged over i.
inline Graph::Var contrastive_loss(Graph& g, const std::vector<Graph::Var>& emb_a,
                                   const std::vector<Graph::Var>& emb_b, double tau) {
  if (emb_a.size() != emb_b.size())
    throw InputError("contrastive_loss: embedding count mismatch");
  if (emb_a.empty()) throw InputError("contrastive_loss: empty batch");
  if (tau <= 0.0) throw ConfigError("contrastive_loss: temperature must be > 0");
  const int T = static_cast<int>(emb_a.size());
  const double inv_tau = 1.0 / tau;

  std::vector<std::vector<Graph::Var>> scaled(T, std::vector<Graph::Var>(T));
  for (int i = 0; i < T; ++i)
    for (int j = 0; j < T; ++j)
      scaled[i][j] = g.scalar_mul(g.cosine_similarity(emb_a[i], emb_b[j]), inv_tau);

  auto logsumexp = [&g, T](auto&& term) {
    Graph::Var acc = g.exp_(term(0));
    for (int j = 1; j < T; ++j) acc = g.add(acc, g.exp_(term(j)));
    return g.log_(acc);
  };

  Graph::Var total = g.constant(Tensor::scalar(0.0));
  for (int i = 0; i < T; ++i) {
    Graph::Var lse_ab = logsumexp([&](int j) { return scaled[i][j]; });
    Graph::Var lse_ba = logsumexp([&](int j) { return scaled[j][i]; });
    // sim is symmetric, so sim(b_i, a_i) reuses scaled[i][i]
    Graph::Var term = g.sub(g.add(lse_ab, lse_ba),
                            g.scalar_mul(scaled[i][i], 2.0));
    total = g.add(total, term);
  }
  return g.scalar_mul(total, 1.0 / T);
}

}  // namespace ccl
