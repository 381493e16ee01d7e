#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "ccl/graph.hpp"
#include "fd_oracle.hpp"

using namespace ccl;
using ccl::testing::gradcheck;

namespace {

Tensor random_tensor(std::vector<int> shape, std::mt19937_64& rng, double lo = -1.0,
                     double hi = 1.0) {
  Tensor t(std::move(shape));
  std::uniform_real_distribution<double> d(lo, hi);
  for (double& v : t.data) v = d(rng);
  return t;
}

}  // namespace

TEST_CASE("op_set lists the supported primitives") {
  CHECK(Graph::supports("matmul"));
  CHECK(Graph::supports("softmax"));
  CHECK(Graph::supports("layer-norm"));
  CHECK(Graph::supports("embedding-lookup"));
  CHECK_FALSE(Graph::supports("convolution"));
  CHECK(Graph::op_set().size() == 18);
}

TEST_CASE("analytic gradients of tiny graphs") {
  {
    Graph g;
    auto x = g.leaf(Tensor::scalar(3.0));
    auto y = g.mul(x, x);
    g.backward(y);
    CHECK(g.grad(x).data[0] == Catch::Approx(6.0));
  }
  {
    Graph g;
    auto x = g.leaf(Tensor::scalar(0.0));
    auto y = g.exp_(x);
    g.backward(y);
    CHECK(g.grad(x).data[0] == Catch::Approx(1.0));
  }
}

TEST_CASE("5-parameter composite graph matches finite differences") {
  std::mt19937_64 rng(42);
  std::vector<Tensor> inputs = {
      random_tensor({2, 3}, rng), random_tensor({3, 2}, rng), random_tensor({2}, rng),
      random_tensor({2, 2}, rng, 0.2, 1.5), Tensor::scalar(0.7)};
  auto build = [](Graph& g, const std::vector<Graph::Var>& in) {
    auto mm = g.matmul(in[0], in[1]);                 // {2,2}
    auto biased = g.add(mm, in[2]);                   // row broadcast
    auto act = g.gelu(g.mul(biased, in[3]));
    auto soft = g.softmax(act);
    auto mixed = g.add(g.log_(g.exp_(soft)), in[4]);  // scalar broadcast
    return g.mean_all(g.layer_norm(mixed));
  };
  auto res = gradcheck(build, inputs);
  INFO("max rel err " << res.max_rel_err << " over " << res.checked << " entries");
  CHECK(res.max_rel_err < 1e-4);
}

TEST_CASE("per-primitive gradient check, 100 random trials each") {
  std::mt19937_64 rng(7);
  struct Case {
    const char* name;
    std::function<testing::Builder()> make;
    std::vector<std::vector<int>> shapes;
    double lo = -1.0, hi = 1.0;
  };
  Tensor keep({3, 4});
  {
    std::mt19937_64 mrng(3);
    std::bernoulli_distribution b(0.5);
    for (double& v : keep.data) v = b(mrng) ? 1.0 : 0.0;
  }
  std::vector<Case> cases = {
      {"matmul",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.mean_all(g.matmul(in[0], in[1]));
         };
       },
       {{3, 4}, {4, 2}}},
      {"elementwise",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.mean_all(g.mul(g.sub(g.add(in[0], in[1]), in[2]), in[0]));
         };
       },
       {{3, 4}, {3, 4}, {4}}},
      {"scalar_mul_exp_log",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.sum_all(g.log_(g.exp_(g.scalar_mul(in[0], 0.37))));
         };
       },
       {{2, 5}}},
      {"softmax",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           auto w = g.softmax(in[0]);
           return g.sum_all(g.mul(w, in[1]));
         };
       },
       {{3, 4}, {3, 4}}},
      {"layer_norm",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.sum_all(g.mul(g.layer_norm(in[0]), in[1]));
         };
       },
       {{3, 6}, {3, 6}}},
      {"gelu",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.mean_all(g.gelu(in[0]));
         };
       },
       {{4, 3}},
       -2.0,
       2.0},
      {"embedding",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.mean_all(g.embedding(in[0], {1, 3, 1, 0}));
         };
       },
       {{5, 4}}},
      {"slice_concat_transpose",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           auto a = g.slice(in[0], 0, 0, 2);
           auto b = g.slice(in[0], 1, 1, 3);
           return g.mean_all(g.concat({g.transpose(a), b}, 1));
         };
       },
       {{4, 4}}},
      {"reduce",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           auto s0 = g.sum_axis(in[0], 0);
           auto m1 = g.mean_axis(in[0], 1);
           return g.add(g.sum_all(g.mul(s0, s0)), g.sum_all(m1));
         };
       },
       {{3, 5}}},
      {"masked_fill",
       [&keep] {
         return [&keep](Graph& g, const std::vector<Graph::Var>& in) {
           return g.mean_all(g.masked_fill(in[0], keep, -2.0));
         };
       },
       {{3, 4}}},
      {"cosine",
       [] {
         return [](Graph& g, const std::vector<Graph::Var>& in) {
           return g.cosine_similarity(in[0], in[1]);
         };
       },
       {{6}, {6}}},
  };

  for (const auto& c : cases) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      std::vector<Tensor> inputs;
      for (const auto& s : c.shapes) inputs.push_back(random_tensor(s, rng, c.lo, c.hi));
      auto res = gradcheck(c.make(), inputs);
      worst = std::max(worst, res.max_rel_err);
    }
    INFO(c.name << " worst rel err " << worst);
    CHECK(worst < 1e-4);
  }
}

TEST_CASE("backward linearity on shared leaves") {
  std::mt19937_64 rng(11);
  Tensor x = random_tensor({3, 3}, rng);
  auto grad_of = [&x](double a, double b) {
    Graph g;
    auto lx = g.leaf(x);
    auto f = g.sum_all(g.gelu(lx));
    auto h = g.sum_all(g.mul(lx, lx));
    g.backward(g.add(g.scalar_mul(f, a), g.scalar_mul(h, b)));
    return g.grad(lx);
  };
  const Tensor gf = grad_of(1.0, 0.0);
  const Tensor gh = grad_of(0.0, 1.0);
  const Tensor combo = grad_of(2.5, -0.75);
  for (std::size_t i = 0; i < combo.data.size(); ++i)
    CHECK(combo.data[i] ==
          Catch::Approx(2.5 * gf.data[i] - 0.75 * gh.data[i]).margin(1e-12));
}

TEST_CASE("determinism: identical inputs give bit-identical results") {
  auto run = [] {
    std::mt19937_64 rng(99);
    Tensor a = random_tensor({4, 4}, rng);
    Tensor b = random_tensor({4, 4}, rng);
    Graph g;
    auto la = g.leaf(a), lb = g.leaf(b);
    auto y = g.mean_all(g.softmax(g.matmul(g.layer_norm(la), lb)));
    g.backward(y);
    return std::pair{g.value(y).data[0], g.grad(la).data};
  };
  auto [v1, g1] = run();
  auto [v2, g2] = run();
  CHECK(v1 == v2);
  CHECK(g1 == g2);
}

TEST_CASE("cosine similarity values") {
  auto cos = [](std::vector<double> u, std::vector<double> v) {
    Graph g;
    auto lu = g.leaf(Tensor({static_cast<int>(u.size())}, u));
    auto lv = g.leaf(Tensor({static_cast<int>(v.size())}, v));
    return g.value(g.cosine_similarity(lu, lv)).data[0];
  };
  CHECK(cos({1, 0}, {1, 0}) == Catch::Approx(1.0).margin(1e-9));
  CHECK(cos({1, 0}, {0, 1}) == Catch::Approx(0.0).margin(1e-9));
  CHECK(cos({1, 1}, {1, 0}) == Catch::Approx(0.7071067811865475).margin(1e-9));
  // zero-norm input is guarded, not fatal
  CHECK(std::isfinite(cos({0, 0}, {1, 0})));
  CHECK(cos({0, 0}, {1, 0}) == Catch::Approx(0.0).margin(1e-6));
}

TEST_CASE("error contracts") {
  Graph g;
  auto m = g.leaf(Tensor({2, 2}, {1, 2, 3, 4}));
  CHECK_THROWS_AS(g.backward(m), InputError);  // non-scalar root
  auto neg = g.leaf(Tensor::scalar(-1.0));
  CHECK_THROWS_AS(g.log_(neg), NumericError);  // NaN forward is an error
  CHECK_THROWS_AS(g.matmul(m, g.leaf(Tensor({3, 2}))), InputError);
}
