#pragma once

#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "ccl/errors.hpp"
#include "ccl/graph.hpp"
#include "ccl/tensor.hpp"

namespace ccl {

struct ModelConfig {
  int n_layers = 6;
  int n_heads = 4;
  int d_model = 64;
  int d_ff = 256;
  int vocab_size = 512;
  int max_seq_len = 64;
  int seed = 0;
  bool tie_embeddings = true;

  void validate() const {
    if (n_layers < 2) throw ConfigError("ModelConfig: n_layers must be >= 2");
    if (n_heads < 1) throw ConfigError("ModelConfig: n_heads must be >= 1");
    if (d_model % n_heads != 0)
      throw ConfigError("ModelConfig: d_model must be divisible by n_heads");
    if (d_ff < 1 || vocab_size < 1 || max_seq_len < 1)
      throw ConfigError("ModelConfig: dimensions must be positive");
  }
};

// Named parameter tensors; the map is ordered so iteration is deterministic.
using ParameterSet = std::map<std::string, Tensor>;

enum class ParamGroup { kEmbedding, kLayer, kHead };

// "embed.*" -> embedding group; "layer{i}.*" -> that layer; everything else
// (final norm, untied head) -> head group.
inline ParamGroup param_group(const std::string& name, int* layer_index = nullptr) {
  if (name.rfind("embed.", 0) == 0) return ParamGroup::kEmbedding;
  if (name.rfind("layer", 0) == 0) {
    const std::size_t dot = name.find('.');
    if (dot != std::string::npos && dot > 5) {
      if (layer_index) *layer_index = std::stoi(name.substr(5, dot - 5));
      return ParamGroup::kLayer;
    }
  }
  return ParamGroup::kHead;
}

inline ParameterSet init_parameters(const ModelConfig& cfg) {
  cfg.validate();
  std::mt19937_64 rng(static_cast<std::uint64_t>(cfg.seed));
  const double w_std = 0.08;
  ParameterSet p;
  p["embed.tok"] = randn({cfg.vocab_size, cfg.d_model}, rng, w_std);
  p["embed.pos"] = randn({cfg.max_seq_len, cfg.d_model}, rng, 0.02);
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string pre = "layer" + std::to_string(l) + ".";
    p[pre + "attn.wq"] = randn({cfg.d_model, cfg.d_model}, rng, w_std);
    p[pre + "attn.wk"] = randn({cfg.d_model, cfg.d_model}, rng, w_std);
    p[pre + "attn.wv"] = randn({cfg.d_model, cfg.d_model}, rng, w_std);
    p[pre + "attn.wo"] = randn({cfg.d_model, cfg.d_model}, rng, w_std);
    p[pre + "ln1.g"] = Tensor({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
    p[pre + "ln1.b"] = Tensor({cfg.d_model});
    p[pre + "ln2.g"] = Tensor({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
    p[pre + "ln2.b"] = Tensor({cfg.d_model});
    p[pre + "mlp.w1"] = randn({cfg.d_model, cfg.d_ff}, rng, w_std);
    p[pre + "mlp.b1"] = Tensor({cfg.d_ff});
    p[pre + "mlp.w2"] = randn({cfg.d_ff, cfg.d_model}, rng, w_std);
    p[pre + "mlp.b2"] = Tensor({cfg.d_model});
  }
  p["final_ln.g"] = Tensor({cfg.d_model}, std::vector<double>(cfg.d_model, 1.0));
  p["final_ln.b"] = Tensor({cfg.d_model});
  if (!cfg.tie_embeddings)
    p["head.w"] = randn({cfg.d_model, cfg.vocab_size}, rng, w_std);
  return p;
}

// Parameter leaf vars for one graph; every forward in the step reuses them so
// gradients accumulate across sequences.
using ParamVars = std::map<std::string, Graph::Var>;

inline ParamVars bind_parameters(Graph& g, const ParameterSet& params) {
  ParamVars vars;
  for (const auto& [name, tensor] : params) vars[name] = g.leaf(tensor);
  return vars;
}

// Read-only binding for evaluation passes; no gradients flow.
inline ParamVars bind_parameters_const(Graph& g, const ParameterSet& params) {
  ParamVars vars;
  for (const auto& [name, tensor] : params) vars[name] = g.constant(tensor);
  return vars;
}

struct ForwardResult {
  // hidden[s][l]: {L_s, d_model}; l = 0 is the embedding output, l = 1..n_layers
  // the output of each transformer block.
  std::vector<std::vector<Graph::Var>> hidden;
  std::vector<Graph::Var> logits;  // per sequence: {L_s, vocab}
};

inline ForwardResult forward(Graph& g, const ParamVars& pv, const ModelConfig& cfg,
                             const std::vector<std::vector<int>>& token_batch,
                             bool causal = true) {
  const int D = cfg.d_model, H = cfg.n_heads, dh = D / H;
  const double att_scale = 1.0 / std::sqrt(static_cast<double>(dh));
  ForwardResult out;
  for (const auto& tokens : token_batch) {
    const int L = static_cast<int>(tokens.size());
    if (L == 0) throw InputError("forward: empty sequence");
    if (L > cfg.max_seq_len)
      throw InputError("forward: sequence length " + std::to_string(L) +
                       " exceeds max_seq_len " + std::to_string(cfg.max_seq_len));
    for (int t : tokens)
      if (t < 0 || t >= cfg.vocab_size)
        throw InputError("forward: token id " + std::to_string(t) + " out of range");

    std::vector<Graph::Var> layers;
    Graph::Var x = g.add(g.embedding(pv.at("embed.tok"), tokens),
                         g.slice(pv.at("embed.pos"), 0, 0, L));
    layers.push_back(x);

    Tensor causal_keep({L, L});
    for (int i = 0; i < L; ++i)
      for (int j = 0; j < L; ++j) causal_keep.at(i, j) = (!causal || j <= i) ? 1.0 : 0.0;

    for (int l = 0; l < cfg.n_layers; ++l) {
      const std::string pre = "layer" + std::to_string(l) + ".";
      // attention sublayer, pre-norm
      Graph::Var xn = g.add(g.mul(g.layer_norm(x), pv.at(pre + "ln1.g")),
                            pv.at(pre + "ln1.b"));
      Graph::Var q = g.matmul(xn, pv.at(pre + "attn.wq"));
      Graph::Var k = g.matmul(xn, pv.at(pre + "attn.wk"));
      Graph::Var v = g.matmul(xn, pv.at(pre + "attn.wv"));
      std::vector<Graph::Var> heads;
      for (int h = 0; h < H; ++h) {
        Graph::Var qh = g.slice(q, 1, h * dh, (h + 1) * dh);
        Graph::Var kh = g.slice(k, 1, h * dh, (h + 1) * dh);
        Graph::Var vh = g.slice(v, 1, h * dh, (h + 1) * dh);
        Graph::Var scores = g.scalar_mul(g.matmul(qh, g.transpose(kh)), att_scale);
        scores = g.masked_fill(scores, causal_keep, -1e9);
        heads.push_back(g.matmul(g.softmax(scores), vh));
      }
      Graph::Var att = g.matmul(H == 1 ? heads[0] : g.concat(heads, 1),
                                pv.at(pre + "attn.wo"));
      x = g.add(x, att);
      // MLP sublayer
      Graph::Var hn = g.add(g.mul(g.layer_norm(x), pv.at(pre + "ln2.g")),
                            pv.at(pre + "ln2.b"));
      Graph::Var m1 = g.gelu(g.add(g.matmul(hn, pv.at(pre + "mlp.w1")),
                                   pv.at(pre + "mlp.b1")));
      Graph::Var m2 = g.add(g.matmul(m1, pv.at(pre + "mlp.w2")), pv.at(pre + "mlp.b2"));
      x = g.add(x, m2);
      layers.push_back(x);
    }

    Graph::Var fin = g.add(g.mul(g.layer_norm(x), pv.at("final_ln.g")),
                           pv.at("final_ln.b"));
    Graph::Var logits = cfg.tie_embeddings
                            ? g.matmul(fin, g.transpose(pv.at("embed.tok")))
                            : g.matmul(fin, pv.at("head.w"));
    out.hidden.push_back(std::move(layers));
    out.logits.push_back(logits);
  }
  return out;
}

enum class EmbeddingMode { kFinalHiddenState, kMeanPool };

// Sequence embedding from a last-layer hidden state var ({L, D}); pad_mask[t]
// is true for real tokens.
inline Graph::Var sentence_embedding(Graph& g, Graph::Var hidden, EmbeddingMode mode,
                                     const std::vector<bool>& pad_mask) {
  const Tensor& h = g.value(hidden);
  const int L = h.shape[0];
  if (static_cast<int>(pad_mask.size()) != L)
    throw InputError("sentence_embedding: pad mask length mismatch");
  int last_real = -1, n_real = 0;
  for (int t = 0; t < L; ++t)
    if (pad_mask[t]) {
      last_real = t;
      ++n_real;
    }
  if (n_real == 0) throw InputError("sentence_embedding: all-pad sequence");
  if (mode == EmbeddingMode::kFinalHiddenState) {
    Graph::Var row = g.slice(hidden, 0, last_real, last_real + 1);  // {1, D}
    return g.sum_axis(row, 0);                                      // {D}
  }
  Tensor m({L, 1});
  for (int t = 0; t < L; ++t) m.at(t, 0) = pad_mask[t] ? 1.0 : 0.0;
  Graph::Var masked = g.mul(hidden, g.constant(m));
  return g.scalar_mul(g.sum_axis(masked, 0), 1.0 / n_real);  // {D}
}

struct LayerSegments {
  int low_begin = 0, low_end = 0;    // [begin, end)
  int mid_begin = 0, mid_end = 0;
  int high_begin = 0, high_end = 0;

  static LayerSegments thirds(int n_layers) {
    LayerSegments s;
    const int a = n_layers / 3, b = (2 * n_layers) / 3;
    s.low_begin = 0;
    s.low_end = a;
    s.mid_begin = a;
    s.mid_end = b;
    s.high_begin = b;
    s.high_end = n_layers;
    return s;
  }

  void validate(int n_layers) const {
    if (low_begin != 0 || low_end != mid_begin || mid_end != high_begin ||
        high_end != n_layers || low_end < low_begin || mid_end < mid_begin ||
        high_end < high_begin)
      throw ConfigError("LayerSegments: ranges must partition [0, n_layers) in order");
  }
};

enum class FreezeSel { kLow, kMid, kHigh, kAll, kEmbeddings, kHead };

// True = trainable. Embeddings and head stay frozen unless selected.
inline std::map<std::string, bool> freeze_mask(const ParameterSet& params,
                                               const LayerSegments& seg,
                                               const std::set<FreezeSel>& selection) {
  if (selection.empty()) throw InputError("freeze_mask: empty selection");
  const bool all = selection.count(FreezeSel::kAll) > 0;
  std::map<std::string, bool> mask;
  for (const auto& [name, _] : params) {
    int layer = -1;
    const ParamGroup group = param_group(name, &layer);
    bool trainable = all;
    if (group == ParamGroup::kEmbedding) {
      trainable = all || selection.count(FreezeSel::kEmbeddings) > 0;
    } else if (group == ParamGroup::kHead) {
      trainable = all || selection.count(FreezeSel::kHead) > 0;
    } else {
      if (selection.count(FreezeSel::kLow) && layer >= seg.low_begin && layer < seg.low_end)
        trainable = true;
      if (selection.count(FreezeSel::kMid) && layer >= seg.mid_begin && layer < seg.mid_end)
        trainable = true;
      if (selection.count(FreezeSel::kHigh) && layer >= seg.high_begin && layer < seg.high_end)
        trainable = true;
    }
    mask[name] = trainable;
  }
  return mask;
}

}  // namespace ccl
