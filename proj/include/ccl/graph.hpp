#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "ccl/errors.hpp"
#include "ccl/tensor.hpp"

namespace ccl {

// Define-by-run reverse-mode autodiff tape. Nodes are appended in forward
// order, so the list itself is a topological order; backward() walks it in
// reverse. One Graph per training step, single-threaded.
class Graph {
 public:
  using Var = int;

  static const std::vector<std::string>& op_set() {
    static const std::vector<std::string> ops = {
        "matmul",        "add",        "multiply-by-scalar",
        "elementwise-add", "elementwise-sub", "elementwise-mul",
        "exp",           "log",        "softmax",
        "layer-norm",    "gelu",       "embedding-lookup",
        "slice",         "concat",     "mean-axis",
        "sum-axis",      "transpose",  "masked-fill"};
    return ops;
  }

  static bool supports(const std::string& op) {
    const auto& ops = op_set();
    return std::find(ops.begin(), ops.end(), op) != ops.end();
  }

  Var leaf(Tensor t) { return push("leaf", std::move(t), {}, nullptr, true); }

  // Constant: participates in forward math, never receives gradient flow.
  Var constant(Tensor t) { return push("const", std::move(t), {}, nullptr, false); }

  const Tensor& value(Var v) const { return nodes_[v].value; }
  const Tensor& grad(Var v) const { return nodes_[v].grad; }
  std::size_t size() const { return nodes_.size(); }

  // ---- primitives -------------------------------------------------------

  Var matmul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    if (A.shape.size() != 2 || B.shape.size() != 2 || A.shape[1] != B.shape[0]) {
      throw InputError("matmul: incompatible shapes " + A.shape_str() + " x " + B.shape_str());
    }
    const int M = A.shape[0], K = A.shape[1], N = B.shape[1];
    Tensor out({M, N});
    for (int i = 0; i < M; ++i) {
      for (int k = 0; k < K; ++k) {
        const double aik = A.at(i, k);
        if (aik == 0.0) continue;
        for (int j = 0; j < N; ++j) out.at(i, j) += aik * B.at(k, j);
      }
    }
    return push("matmul", std::move(out), {a, b}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      const Tensor& A = g.val(n.inputs[0]);
      const Tensor& B = g.val(n.inputs[1]);
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      Tensor& dB = g.nodes_[n.inputs[1]].grad;
      const int M = A.shape[0], K = A.shape[1], N = B.shape[1];
      if (g.wants_grad(n.inputs[0])) {
        for (int i = 0; i < M; ++i)
          for (int j = 0; j < N; ++j) {
            const double go = n.grad.at(i, j);
            if (go == 0.0) continue;
            for (int k = 0; k < K; ++k) dA.at(i, k) += go * B.at(k, j);
          }
      }
      if (g.wants_grad(n.inputs[1])) {
        for (int i = 0; i < M; ++i)
          for (int k = 0; k < K; ++k) {
            const double aik = A.at(i, k);
            if (aik == 0.0) continue;
            for (int j = 0; j < N; ++j) dB.at(k, j) += aik * n.grad.at(i, j);
          }
      }
    });
  }

  Var add(Var a, Var b) { return binary(a, b, +1.0, "elementwise-add"); }
  Var sub(Var a, Var b) { return binary(a, b, -1.0, "elementwise-sub"); }

  Var mul(Var a, Var b) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out = A;
    const Broadcast bc = classify(A, B);
    apply_bc(out, B, bc, [](double& x, double y) { x *= y; });
    return push("elementwise-mul", std::move(out), {a, b}, [bc](Graph& g, int self) {
      auto& n = g.nodes_[self];
      const Tensor& A = g.val(n.inputs[0]);
      const Tensor& B = g.val(n.inputs[1]);
      if (g.wants_grad(n.inputs[0])) {
        Tensor& dA = g.nodes_[n.inputs[0]].grad;
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          dA.data[i] += n.grad.data[i] * g.bc_value(B, bc, i, A);
      }
      if (g.wants_grad(n.inputs[1])) {
        Tensor& dB = g.nodes_[n.inputs[1]].grad;
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          g.bc_accum(dB, bc, i, A, n.grad.data[i] * A.data[i]);
      }
    });
  }

  Var scalar_mul(Var a, double c) {
    Tensor out = val(a);
    for (double& v : out.data) v *= c;
    return push("multiply-by-scalar", std::move(out), {a}, [c](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) dA.data[i] += c * n.grad.data[i];
    });
  }

  Var exp_(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::exp(v);
    return push("exp", std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        dA.data[i] += n.grad.data[i] * n.value.data[i];
    });
  }

  Var log_(Var a) {
    Tensor out = val(a);
    for (double& v : out.data) v = std::log(v);
    return push("log", std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      const Tensor& A = g.val(n.inputs[0]);
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        dA.data[i] += n.grad.data[i] / A.data[i];
    });
  }

  // Softmax over the last axis, max-subtracted per row.
  Var softmax(Var a) {
    const Tensor& A = val(a);
    Tensor out = A;
    const int R = A.rows(), C = A.cols();
    for (int r = 0; r < R; ++r) {
      double mx = -1e300;
      for (int c = 0; c < C; ++c) mx = std::max(mx, out.data[r * C + c]);
      double s = 0.0;
      for (int c = 0; c < C; ++c) {
        double e = std::exp(out.data[r * C + c] - mx);
        out.data[r * C + c] = e;
        s += e;
      }
      for (int c = 0; c < C; ++c) out.data[r * C + c] /= s;
    }
    return push("softmax", std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      const int R = n.value.rows(), C = n.value.cols();
      for (int r = 0; r < R; ++r) {
        double dot = 0.0;
        for (int c = 0; c < C; ++c)
          dot += n.grad.data[r * C + c] * n.value.data[r * C + c];
        for (int c = 0; c < C; ++c)
          dA.data[r * C + c] +=
              n.value.data[r * C + c] * (n.grad.data[r * C + c] - dot);
      }
    });
  }

  // Per-row normalization to zero mean / unit variance (no gain or bias;
  // those compose via mul/add).
  Var layer_norm(Var a, double eps = 1e-5) {
    const Tensor& A = val(a);
    Tensor out = A;
    const int R = A.rows(), C = A.cols();
    std::vector<double> inv_sigma(R);
    for (int r = 0; r < R; ++r) {
      double mu = 0.0;
      for (int c = 0; c < C; ++c) mu += A.data[r * C + c];
      mu /= C;
      double var = 0.0;
      for (int c = 0; c < C; ++c) {
        double d = A.data[r * C + c] - mu;
        var += d * d;
      }
      var /= C;
      inv_sigma[r] = 1.0 / std::sqrt(var + eps);
      for (int c = 0; c < C; ++c)
        out.data[r * C + c] = (A.data[r * C + c] - mu) * inv_sigma[r];
    }
    return push("layer-norm", std::move(out), {a},
                [inv_sigma = std::move(inv_sigma)](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      const int R = n.value.rows(), C = n.value.cols();
      for (int r = 0; r < R; ++r) {
        double mean_dy = 0.0, mean_dyx = 0.0;
        for (int c = 0; c < C; ++c) {
          mean_dy += n.grad.data[r * C + c];
          mean_dyx += n.grad.data[r * C + c] * n.value.data[r * C + c];
        }
        mean_dy /= C;
        mean_dyx /= C;
        for (int c = 0; c < C; ++c) {
          dA.data[r * C + c] += inv_sigma[r] * (n.grad.data[r * C + c] - mean_dy -
                                                n.value.data[r * C + c] * mean_dyx);
        }
      }
    });
  }

  // tanh-approximate gelu.
  Var gelu(Var a) {
    static constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    static constexpr double kA = 0.044715;
    const Tensor& A = val(a);
    Tensor out = A;
    for (double& v : out.data) {
      const double u = kC * (v + kA * v * v * v);
      v = 0.5 * v * (1.0 + std::tanh(u));
    }
    return push("gelu", std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      const Tensor& A = g.val(n.inputs[0]);
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i) {
        const double x = A.data[i];
        const double u = kC * (x + kA * x * x * x);
        const double t = std::tanh(u);
        const double du = kC * (1.0 + 3.0 * kA * x * x);
        const double d = 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        dA.data[i] += n.grad.data[i] * d;
      }
    });
  }

  // table: {V, D}; returns {len(ids), D}. Gradient scatters into the table.
  Var embedding(Var table, std::vector<int> ids) {
    const Tensor& T = val(table);
    if (T.shape.size() != 2) throw InputError("embedding-lookup: table must be rank 2");
    const int V = T.shape[0], D = T.shape[1];
    Tensor out({static_cast<int>(ids.size()), D});
    for (std::size_t r = 0; r < ids.size(); ++r) {
      if (ids[r] < 0 || ids[r] >= V)
        throw InputError("embedding-lookup: id " + std::to_string(ids[r]) + " out of range");
      for (int c = 0; c < D; ++c) out.at(static_cast<int>(r), c) = T.at(ids[r], c);
    }
    return push("embedding-lookup", std::move(out), {table},
                [ids = std::move(ids)](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dT = g.nodes_[n.inputs[0]].grad;
      const int D = n.value.shape[1];
      for (std::size_t r = 0; r < ids.size(); ++r)
        for (int c = 0; c < D; ++c)
          dT.at(ids[r], c) += n.grad.at(static_cast<int>(r), c);
    });
  }

  // Contiguous slice along axis 0 or 1 of a rank-1/2 tensor.
  Var slice(Var a, int axis, int start, int end) {
    const Tensor& A = val(a);
    const int rank = static_cast<int>(A.shape.size());
    if (rank < 1 || rank > 2 || axis < 0 || axis >= rank)
      throw InputError("slice: bad axis");
    const int extent = A.shape[axis];
    if (start < 0 || end > extent || start >= end) throw InputError("slice: bad range");
    Tensor out;
    if (rank == 1) {
      out = Tensor({end - start});
      for (int i = start; i < end; ++i) out.data[i - start] = A.data[i];
    } else if (axis == 0) {
      out = Tensor({end - start, A.shape[1]});
      for (int r = start; r < end; ++r)
        for (int c = 0; c < A.shape[1]; ++c) out.at(r - start, c) = A.at(r, c);
    } else {
      out = Tensor({A.shape[0], end - start});
      for (int r = 0; r < A.shape[0]; ++r)
        for (int c = start; c < end; ++c) out.at(r, c - start) = A.at(r, c);
    }
    return push("slice", std::move(out), {a}, [axis, start](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      const Tensor& A = g.val(n.inputs[0]);
      if (A.shape.size() == 1) {
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          dA.data[start + i] += n.grad.data[i];
      } else if (axis == 0) {
        for (int r = 0; r < n.grad.shape[0]; ++r)
          for (int c = 0; c < n.grad.shape[1]; ++c)
            dA.at(start + r, c) += n.grad.at(r, c);
      } else {
        for (int r = 0; r < n.grad.shape[0]; ++r)
          for (int c = 0; c < n.grad.shape[1]; ++c)
            dA.at(r, start + c) += n.grad.at(r, c);
      }
    });
  }

  Var concat(const std::vector<Var>& parts, int axis) {
    if (parts.empty()) throw InputError("concat: empty input list");
    const int rank = static_cast<int>(val(parts[0]).shape.size());
    if (rank < 1 || rank > 2 || axis < 0 || axis >= rank)
      throw InputError("concat: bad axis");
    Tensor out;
    std::vector<int> offsets;
    if (rank == 1) {
      int total = 0;
      for (Var p : parts) {
        offsets.push_back(total);
        total += val(p).shape[0];
      }
      out = Tensor({total});
      for (std::size_t i = 0; i < parts.size(); ++i)
        for (int k = 0; k < val(parts[i]).shape[0]; ++k)
          out.data[offsets[i] + k] = val(parts[i]).data[k];
    } else if (axis == 0) {
      const int C = val(parts[0]).shape[1];
      int total = 0;
      for (Var p : parts) {
        if (val(p).shape[1] != C) throw InputError("concat: column mismatch");
        offsets.push_back(total);
        total += val(p).shape[0];
      }
      out = Tensor({total, C});
      for (std::size_t i = 0; i < parts.size(); ++i)
        for (int r = 0; r < val(parts[i]).shape[0]; ++r)
          for (int c = 0; c < C; ++c) out.at(offsets[i] + r, c) = val(parts[i]).at(r, c);
    } else {
      const int R = val(parts[0]).shape[0];
      int total = 0;
      for (Var p : parts) {
        if (val(p).shape[0] != R) throw InputError("concat: row mismatch");
        offsets.push_back(total);
        total += val(p).shape[1];
      }
      out = Tensor({R, total});
      for (std::size_t i = 0; i < parts.size(); ++i)
        for (int r = 0; r < R; ++r)
          for (int c = 0; c < val(parts[i]).shape[1]; ++c)
            out.at(r, offsets[i] + c) = val(parts[i]).at(r, c);
    }
    return push("concat", std::move(out), parts,
                [axis, offsets = std::move(offsets)](Graph& g, int self) {
      auto& n = g.nodes_[self];
      for (std::size_t i = 0; i < n.inputs.size(); ++i) {
        if (!g.wants_grad(n.inputs[i])) continue;
        Tensor& dP = g.nodes_[n.inputs[i]].grad;
        const Tensor& P = g.val(n.inputs[i]);
        if (P.shape.size() == 1) {
          for (int k = 0; k < P.shape[0]; ++k) dP.data[k] += n.grad.data[offsets[i] + k];
        } else if (axis == 0) {
          for (int r = 0; r < P.shape[0]; ++r)
            for (int c = 0; c < P.shape[1]; ++c)
              dP.at(r, c) += n.grad.at(offsets[i] + r, c);
        } else {
          for (int r = 0; r < P.shape[0]; ++r)
            for (int c = 0; c < P.shape[1]; ++c)
              dP.at(r, c) += n.grad.at(r, offsets[i] + c);
        }
      }
    });
  }

  Var sum_axis(Var a, int axis) { return reduce(a, axis, false); }
  Var mean_axis(Var a, int axis) { return reduce(a, axis, true); }

  Var sum_all(Var a) {
    const Tensor& A = val(a);
    double s = 0.0;
    for (double v : A.data) s += v;
    return push("sum-axis", Tensor::scalar(s), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (double& v : dA.data) v += n.grad.data[0];
    });
  }

  Var mean_all(Var a) {
    const std::int64_t n = val(a).numel();
    return scalar_mul(sum_all(a), 1.0 / static_cast<double>(n));
  }

  Var transpose(Var a) {
    const Tensor& A = val(a);
    if (A.shape.size() != 2) throw InputError("transpose: rank-2 only");
    Tensor out({A.shape[1], A.shape[0]});
    for (int r = 0; r < A.shape[0]; ++r)
      for (int c = 0; c < A.shape[1]; ++c) out.at(c, r) = A.at(r, c);
    return push("transpose", std::move(out), {a}, [](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (int r = 0; r < n.grad.shape[0]; ++r)
        for (int c = 0; c < n.grad.shape[1]; ++c) dA.at(c, r) += n.grad.at(r, c);
    });
  }

  // keep_mask entries: 1 keeps the input, 0 substitutes fill_value.
  Var masked_fill(Var a, const Tensor& keep_mask, double fill_value) {
    const Tensor& A = val(a);
    if (!A.same_shape(keep_mask)) throw InputError("masked-fill: mask shape mismatch");
    Tensor out = A;
    for (std::int64_t i = 0; i < out.numel(); ++i)
      if (keep_mask.data[i] == 0.0) out.data[i] = fill_value;
    return push("masked-fill", std::move(out), {a},
                [mask = keep_mask](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      for (std::int64_t i = 0; i < n.grad.numel(); ++i)
        if (mask.data[i] != 0.0) dA.data[i] += n.grad.data[i];
    });
  }

  // ---- composites --------------------------------------------------------

  // dot(u,v) / (sqrt(|u|^2 + eps^2) * sqrt(|v|^2 + eps^2)), eps = 1e-8.
  // Near-zero vectors produce a warning instead of dividing by zero.
  Var cosine_similarity(Var u, Var v) {
    static constexpr double kEpsSq = 1e-16;
    if (val(u).numel() != val(v).numel())
      throw InputError("cosine_similarity: length mismatch");
    const Var dot = sum_all(mul(u, v));
    const Var su = sum_all(mul(u, u));
    const Var sv = sum_all(mul(v, v));
    if (value(su).data[0] < kEpsSq || value(sv).data[0] < kEpsSq) {
      std::fprintf(stderr, "[ccl] warning: cosine_similarity on near-zero vector\n");
    }
    const Var eps = constant(Tensor::scalar(kEpsSq));
    const Var inv_u = exp_(scalar_mul(log_(add(su, eps)), -0.5));
    const Var inv_v = exp_(scalar_mul(log_(add(sv, eps)), -0.5));
    return mul(mul(dot, inv_u), inv_v);
  }

  // ---- backward ----------------------------------------------------------

  void backward(Var root) {
    if (root < 0 || root >= static_cast<int>(nodes_.size()))
      throw InputError("backward: unknown root node");
    if (!nodes_[root].value.is_scalar())
      throw InputError("backward: root must be scalar, got shape " +
                       nodes_[root].value.shape_str());
    for (auto& n : nodes_) {
      n.grad = zeros_like(n.value);
    }
    nodes_[root].grad.data[0] = 1.0;
    for (int i = root; i >= 0; --i) {
      auto& n = nodes_[i];
      if (!n.back) continue;
      if (!n.grad.all_finite())
        throw NumericError(std::string("backward: non-finite gradient at node ") +
                           std::to_string(i) + " (" + n.op + ")");
      n.back(*this, i);
    }
  }

 private:
  struct Node {
    const char* op;
    Tensor value;
    Tensor grad;
    std::vector<Var> inputs;
    std::function<void(Graph&, int)> back;
    bool track;  // gradient flows into or through this node
  };

  enum class Broadcast { kSame, kRow, kCol, kScalar };

  std::vector<Node> nodes_;

  const Tensor& val(Var v) const {
    if (v < 0 || v >= static_cast<int>(nodes_.size()))
      throw InputError("Graph: unknown node id");
    return nodes_[v].value;
  }

  bool wants_grad(Var v) const { return nodes_[v].track; }

  Var push(const char* op, Tensor value, std::vector<Var> inputs,
           std::function<void(Graph&, int)> back, bool force_track = false) {
    if (!value.all_finite())
      throw NumericError(std::string("forward: non-finite output of op '") + op +
                         "' at node " + std::to_string(nodes_.size()));
    bool track = force_track;
    for (Var in : inputs) track = track || nodes_[in].track;
    Node n;
    n.op = op;
    n.value = std::move(value);
    n.inputs = std::move(inputs);
    n.back = track ? std::move(back) : nullptr;
    n.track = track;
    nodes_.push_back(std::move(n));
    return static_cast<Var>(nodes_.size() - 1);
  }

  static Broadcast classify(const Tensor& A, const Tensor& B) {
    if (A.same_shape(B)) return Broadcast::kSame;
    if (B.is_scalar()) return Broadcast::kScalar;
    if (A.shape.size() == 2 && B.shape.size() == 1 && B.shape[0] == A.shape[1])
      return Broadcast::kRow;
    if (A.shape.size() == 2 && B.shape.size() == 2 && B.shape[0] == A.shape[0] &&
        B.shape[1] == 1)
      return Broadcast::kCol;
    throw InputError("broadcast: incompatible shapes " + A.shape_str() + " vs " +
                     B.shape_str());
  }

  double bc_value(const Tensor& B, Broadcast bc, std::int64_t flat,
                  const Tensor& A) const {
    switch (bc) {
      case Broadcast::kSame: return B.data[flat];
      case Broadcast::kScalar: return B.data[0];
      case Broadcast::kRow: return B.data[flat % A.shape[1]];
      case Broadcast::kCol: return B.data[flat / A.shape[1]];
    }
    return 0.0;
  }

  void bc_accum(Tensor& dB, Broadcast bc, std::int64_t flat, const Tensor& A,
                double g) const {
    switch (bc) {
      case Broadcast::kSame: dB.data[flat] += g; break;
      case Broadcast::kScalar: dB.data[0] += g; break;
      case Broadcast::kRow: dB.data[flat % A.shape[1]] += g; break;
      case Broadcast::kCol: dB.data[flat / A.shape[1]] += g; break;
    }
  }

  template <typename F>
  void apply_bc(Tensor& out, const Tensor& B, Broadcast bc, F f) const {
    for (std::int64_t i = 0; i < out.numel(); ++i) f(out.data[i], bc_value(B, bc, i, out));
  }

  Var binary(Var a, Var b, double sign, const char* name) {
    const Tensor& A = val(a);
    const Tensor& B = val(b);
    Tensor out = A;
    const Broadcast bc = classify(A, B);
    apply_bc(out, B, bc, [sign](double& x, double y) { x += sign * y; });
    return push(name, std::move(out), {a, b}, [bc, sign](Graph& g, int self) {
      auto& n = g.nodes_[self];
      const Tensor& A = g.val(n.inputs[0]);
      if (g.wants_grad(n.inputs[0])) {
        Tensor& dA = g.nodes_[n.inputs[0]].grad;
        for (std::int64_t i = 0; i < n.grad.numel(); ++i) dA.data[i] += n.grad.data[i];
      }
      if (g.wants_grad(n.inputs[1])) {
        Tensor& dB = g.nodes_[n.inputs[1]].grad;
        for (std::int64_t i = 0; i < n.grad.numel(); ++i)
          g.bc_accum(dB, bc, i, A, sign * n.grad.data[i]);
      }
    });
  }

  Var reduce(Var a, int axis, bool mean) {
    const Tensor& A = val(a);
    if (A.shape.size() != 2 || axis < 0 || axis > 1)
      throw InputError("reduce: rank-2 tensor and axis 0/1 required");
    const int R = A.shape[0], C = A.shape[1];
    Tensor out(axis == 0 ? std::vector<int>{C} : std::vector<int>{R});
    for (int r = 0; r < R; ++r)
      for (int c = 0; c < C; ++c) out.data[axis == 0 ? c : r] += A.at(r, c);
    const double scale = mean ? 1.0 / (axis == 0 ? R : C) : 1.0;
    if (mean)
      for (double& v : out.data) v *= scale;
    return push(mean ? "mean-axis" : "sum-axis", std::move(out), {a},
                [axis, scale](Graph& g, int self) {
      auto& n = g.nodes_[self];
      if (!g.wants_grad(n.inputs[0])) return;
      Tensor& dA = g.nodes_[n.inputs[0]].grad;
      const int R = dA.shape[0], C = dA.shape[1];
      for (int r = 0; r < R; ++r)
        for (int c = 0; c < C; ++c)
          dA.at(r, c) += scale * n.grad.data[axis == 0 ? c : r];
    });
  }
};

}  // namespace ccl
