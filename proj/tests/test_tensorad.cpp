#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "stqe/tape.hpp"

#include "helpers.hpp"

using namespace stqe;
using stqe::test::check_gradients;

namespace {

Tensor<double> random_tensor(Rng& rng, Shape s, double lo = -1.0,
                             double hi = 1.0) {
  Tensor<double> t(s);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// keeps |x| away from the relu kink
Tensor<double> random_away_from_kinks(Rng& rng, Shape s) {
  Tensor<double> t(s);
  for (auto& v : t.data) {
    v = rng.uniform(0.05, 1.0);
    if (rng.below(2)) v = -v;
  }
  return t;
}

// scalar "readout" so any op output can be checked against a scalar loss:
// loss = mean(out * proj) with a fixed random projection
NodeId project(Tape<double>& tape, NodeId out, uint64_t seed) {
  Rng rng(seed);
  Tensor<double> proj(tape.value(out).shape);
  for (auto& v : proj.data) v = rng.uniform(-1.0, 1.0);
  return tape.reduce_mean(tape.mul(out, tape.leaf(std::move(proj))));
}

NeighborIndex toy_neighbors() {
  NeighborIndex nbrs;
  nbrs.n = 3;
  nbrs.k = 2;
  nbrs.indices = {0, 1, 1, 2, 2, 0};
  nbrs.distances = {0.0, 1.0, 0.0, 1.0, 0.0, 2.0};
  return nbrs;
}

}  // namespace

TEST_CASE("pointwise linear forward examples") {
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(1, 2), {1.0, 2.0}));
  const NodeId w = tape.leaf(Tensor<double>(Shape(2, 1), {1.0, 1.0}));
  const NodeId b = tape.leaf(Tensor<double>(Shape(1), {0.5}));
  const NodeId y = tape.linear(x, w, b);
  CHECK(tape.value(y).data[0] == 3.5);

  // identity weight, zero bias
  const NodeId wi = tape.leaf(Tensor<double>(Shape(2, 2), {1, 0, 0, 1}));
  const NodeId bz = tape.leaf(Tensor<double>(Shape(2), {0, 0}));
  const NodeId yi = tape.linear(x, wi, bz);
  CHECK(tape.value(yi).data == tape.value(x).data);

  const NodeId wbad = tape.leaf(Tensor<double>(Shape(3, 1), {1, 1, 1}));
  CHECK_THROWS_AS(tape.linear(x, wbad, b), Error);
}

TEST_CASE("pointwise linear gradient < 1e-6") {
  Rng rng(31);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(4, 3)), random_tensor(rng, Shape(3, 5)),
       random_tensor(rng, Shape(5))},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.linear(ids[0], ids[1], ids[2]), 1);
      });
  CHECK(gc.max_err < 1e-6);
  CHECK(gc.checked == 12 + 15 + 5);
}

TEST_CASE("pointwise linear is linear when bias is zero") {
  Rng rng(32);
  const Tensor<double> xa = random_tensor(rng, Shape(6, 4));
  const Tensor<double> xb = random_tensor(rng, Shape(6, 4));
  const Tensor<double> w = random_tensor(rng, Shape(4, 3));
  const double alpha = 0.7, beta = -1.3;

  Tape<double> tape;
  const NodeId wid = tape.leaf(Tensor<double>(w));
  const NodeId zb = tape.leaf(Tensor<double>(Shape(3)));
  Tensor<double> mix(Shape(6, 4));
  for (std::size_t i = 0; i < mix.data.size(); ++i)
    mix.data[i] = alpha * xa.data[i] + beta * xb.data[i];
  const NodeId lhs = tape.linear(tape.leaf(std::move(mix)), wid, zb);
  const NodeId ya = tape.linear(tape.leaf(Tensor<double>(xa)), wid, zb);
  const NodeId yb = tape.linear(tape.leaf(Tensor<double>(xb)), wid, zb);
  for (std::size_t i = 0; i < tape.value(lhs).data.size(); ++i) {
    const double rhs =
        alpha * tape.value(ya).data[i] + beta * tape.value(yb).data[i];
    CHECK(stqe::test::rel_err(tape.value(lhs).data[i], rhs) < 1e-6);
  }
}

TEST_CASE("activations: examples and gradients") {
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(3), {-1.0, 0.0, 2.0}));
  const NodeId lr = tape.leaky_relu(x, 0.01);
  CHECK(tape.value(lr).data[0] == -0.01);
  CHECK(tape.value(lr).data[1] == 0.0);
  CHECK(tape.value(lr).data[2] == 2.0);
  const NodeId sg = tape.sigmoid(x);
  CHECK(tape.value(sg).data[1] == 0.5);

  Rng rng(33);
  auto gc = check_gradients({random_away_from_kinks(rng, Shape(5, 3))},
                            [](Tape<double>& t, std::vector<NodeId>& ids) {
                              return project(t, t.leaky_relu(ids[0], 0.01), 2);
                            });
  CHECK(gc.max_err < 1e-4);
  gc = check_gradients({random_tensor(rng, Shape(5, 3), -3.0, 3.0)},
                       [](Tape<double>& t, std::vector<NodeId>& ids) {
                         return project(t, t.sigmoid(ids[0]), 3);
                       });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("gather: examples and scatter-add backward") {
  const NeighborIndex nbrs = toy_neighbors();
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(3, 2), {1, 2, 3, 4, 5, 6}));
  const NodeId g = tape.gather(x, nbrs);
  // out[i][j] = x[indices[i][j]]
  CHECK(tape.value(g).data == std::vector<double>{1, 2, 3, 4, 3, 4, 5, 6, 5, 6, 1, 2});

  NeighborIndex self;
  self.n = 3;
  self.k = 1;
  self.indices = {0, 1, 2};
  self.distances = {0, 0, 0};
  const NodeId gs = tape.gather(x, self);
  CHECK(tape.value(gs).data == tape.value(x).data);

  Rng rng(34);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(3, 2))},
      [&](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.gather(ids[0], nbrs), 4);
      });
  CHECK(gc.max_err < 1e-4);

  NeighborIndex bad = nbrs;
  bad.indices[0] = 9;
  CHECK_THROWS_AS(tape.gather(x, bad), Error);
}

TEST_CASE("duplicate: examples and gradient") {
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(2, 2), {1, 2, 3, 4}));
  const NodeId d1 = tape.duplicate(x, 1);
  CHECK(tape.value(d1).data == tape.value(x).data);
  const NodeId d3 = tape.duplicate(x, 3);
  CHECK(tape.value(d3).shape == Shape(2, 3, 2));
  CHECK(tape.value(d3).data ==
        std::vector<double>{1, 2, 1, 2, 1, 2, 3, 4, 3, 4, 3, 4});

  Rng rng(35);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(3, 2))},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.duplicate(ids[0], 4), 5);
      });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("concat: examples and gradient") {
  Tape<double> tape;
  const NodeId a = tape.leaf(Tensor<double>(Shape(2, 1), {1, 2}));
  const NodeId b = tape.leaf(Tensor<double>(Shape(2, 2), {3, 4, 5, 6}));
  CHECK(tape.value(tape.concat({a})).data == tape.value(a).data);
  const NodeId c = tape.concat({a, b});
  CHECK(tape.value(c).shape == Shape(2, 3));
  CHECK(tape.value(c).data == std::vector<double>{1, 3, 4, 2, 5, 6});

  Rng rng(36);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(3, 2)), random_tensor(rng, Shape(3, 3))},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.concat({ids[0], ids[1]}), 6);
      });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("slice_channels: inverse of concat and gradient") {
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(2, 3), {1, 2, 3, 4, 5, 6}));
  const NodeId s = tape.slice_channels(x, 1, 3);
  CHECK(tape.value(s).data == std::vector<double>{2, 3, 5, 6});

  Rng rng(37);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(4, 6))},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.slice_channels(ids[0], 2, 5), 7);
      });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("max pool: examples and gradient away from ties") {
  Tape<double> tape;
  // n=1, k=2, c=2: rows [1,5] and [3,2] -> [3,5]
  const NodeId x = tape.leaf(Tensor<double>(Shape(1, 2, 2), {1, 5, 3, 2}));
  const NodeId y = tape.max_pool(x);
  CHECK(tape.value(y).data == std::vector<double>{3, 5});

  const NodeId x1 = tape.leaf(Tensor<double>(Shape(2, 1, 3), {1, 2, 3, 4, 5, 6}));
  CHECK(tape.value(tape.max_pool(x1)).data == std::vector<double>{1, 2, 3, 4, 5, 6});

  Rng rng(38);
  Tensor<double> in(Shape(3, 4, 2));
  for (std::size_t i = 0; i < in.data.size(); ++i)
    in.data[i] = double(i % 7) + 0.01 * double(i);  // distinct, margin > 1e-3
  const auto gc = check_gradients(
      {in},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.max_pool(ids[0]), 8);
      });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("elementwise and scalar ops: examples and gradients") {
  Tape<double> tape;
  const NodeId a = tape.leaf(Tensor<double>(Shape(3), {1, 2, 3}));
  const NodeId ones = tape.leaf(Tensor<double>::full(Shape(3), 1.0));
  CHECK(tape.value(tape.mul(a, ones)).data == tape.value(a).data);
  CHECK(tape.value(tape.reduce_mean(tape.leaf(Tensor<double>::full(Shape(5), 3.25))))
            .data[0] == 3.25);

  Rng rng(39);
  auto gc = check_gradients(
      {random_tensor(rng, Shape(4)), random_tensor(rng, Shape(4))},
      [](Tape<double>& t, std::vector<NodeId>& ids) {
        const NodeId s = t.add(t.mul(ids[0], ids[1]), t.sub(ids[0], ids[1]));
        return project(t, s, 9);
      });
  CHECK(gc.max_err < 1e-4);

  gc = check_gradients({random_tensor(rng, Shape(4), 0.5, 2.0),
                        random_tensor(rng, Shape(4), 0.5, 2.0)},
                       [](Tape<double>& t, std::vector<NodeId>& ids) {
                         const NodeId q = t.div(t.sqrt_op(ids[0]), ids[1]);
                         return project(t, t.affine(q, -2.0, 0.25), 10);
                       });
  CHECK(gc.max_err < 1e-4);

  gc = check_gradients({random_tensor(rng, Shape(6))},
                       [](Tape<double>& t, std::vector<NodeId>& ids) {
                         const NodeId m = t.reduce_mean(ids[0]);
                         return project(t, t.sub_scalar(ids[0], m), 11);
                       });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("mul_neighbor_weights: constants get no gradient path") {
  const NeighborIndex nbrs = toy_neighbors();
  Tensor<double> w(Shape(3, 2), {1.0, 0.5, 1.0, 0.25, 1.0, 0.125});
  Rng rng(40);
  const auto gc = check_gradients(
      {random_tensor(rng, Shape(3, 2, 2))},
      [&](Tape<double>& t, std::vector<NodeId>& ids) {
        return project(t, t.mul_neighbor_weights(ids[0], w), 12);
      });
  CHECK(gc.max_err < 1e-4);

  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>::full(Shape(3, 2, 2), 2.0));
  const NodeId y = tape.mul_neighbor_weights(x, w);
  CHECK(tape.value(y).data[0] == 2.0);
  CHECK(tape.value(y).data[2] == 1.0);  // row weight 0.5
}

TEST_CASE("backward contract") {
  // mean(x) * n == sum: gradient of ones
  Tape<double> tape;
  const NodeId x = tape.leaf(Tensor<double>(Shape(4), {1, 2, 3, 4}));
  const NodeId loss = tape.affine(tape.reduce_mean(x), 4.0, 0.0);
  tape.backward(loss);
  CHECK(tape.grad(x).data == std::vector<double>{1, 1, 1, 1});

  // second backward without reset is an error
  CHECK_THROWS_WITH_AS(tape.backward(loss), doctest::Contains("reset"), Error);
  tape.reset();
  tape.backward(loss);
  CHECK(tape.grad(x).data == std::vector<double>{1, 1, 1, 1});

  // non-scalar loss is rejected
  Tape<double> t2;
  const NodeId v = t2.leaf(Tensor<double>(Shape(3), {1, 2, 3}));
  CHECK_THROWS_AS(t2.backward(v), Error);

  // untouched leaves get zero gradient
  Tape<double> t3;
  const NodeId used = t3.leaf(Tensor<double>(Shape(2), {1, 2}));
  const NodeId unused = t3.leaf(Tensor<double>(Shape(2), {3, 4}));
  t3.backward(t3.reduce_mean(used));
  CHECK(t3.grad(unused).data == std::vector<double>{0, 0});
}

TEST_CASE("forward determinism is bitwise") {
  Rng rng(41);
  const Tensor<double> x = random_tensor(rng, Shape(20, 3));
  const Tensor<double> w = random_tensor(rng, Shape(3, 8));
  const Tensor<double> b = random_tensor(rng, Shape(8));
  auto run = [&]() {
    Tape<double> tape;
    const NodeId y = tape.leaky_relu(
        tape.linear(tape.leaf(Tensor<double>(x)), tape.leaf(Tensor<double>(w)),
                    tape.leaf(Tensor<double>(b))),
        0.01);
    return tape.value(y).data;
  };
  CHECK(run() == run());
}
