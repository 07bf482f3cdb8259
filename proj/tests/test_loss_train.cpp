#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>

#include "stqe/adam.hpp"
#include "stqe/loss.hpp"
#include "stqe/patches.hpp"
#include "stqe/pipeline.hpp"
#include "stqe/train.hpp"

#include "helpers.hpp"

using namespace stqe;
using stqe::test::check_gradients;
using stqe::test::random_cloud;
using stqe::test::TempDir;

namespace {

NodeId leafv(Tape<double>& tape, std::vector<double> v) {
  const int64_t n = int64_t(v.size());
  return tape.leaf(Tensor<double>(Shape(n, 1), std::move(v)));
}

// direct Pearson formula, population moments
double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = double(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ma += a[i];
    mb += b[i];
  }
  ma /= n;
  mb /= n;
  double cov = 0, va = 0, vb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cov += (a[i] - ma) * (b[i] - mb);
    va += (a[i] - ma) * (a[i] - ma);
    vb += (b[i] - mb) * (b[i] - mb);
  }
  return (cov / n) / std::sqrt((va / n) * (vb / n));
}

}  // namespace

TEST_CASE("mse examples and analytic gradient") {
  Tape<double> tape;
  const NodeId same = mse_loss(tape, leafv(tape, {1, 2, 3}), leafv(tape, {1, 2, 3}));
  CHECK(tape.value(same).data[0] == 0.0);
  const NodeId l = mse_loss(tape, leafv(tape, {1, 3}), leafv(tape, {0, 0}));
  CHECK(tape.value(l).data[0] == 5.0);  // (1 + 9) / 2

  // gradient is 2(pred-target)/n
  Tape<double> t2;
  const NodeId pred = leafv(t2, {1.0, 3.0, -2.0});
  const NodeId target = leafv(t2, {0.5, 0.5, 0.5});
  t2.backward(mse_loss(t2, pred, target));
  const std::vector<double> want = {2.0 * 0.5 / 3, 2.0 * 2.5 / 3, 2.0 * -2.5 / 3};
  for (int i = 0; i < 3; ++i)
    CHECK(t2.grad(pred).data[std::size_t(i)] ==
          doctest::Approx(want[std::size_t(i)]).epsilon(1e-12));

  Rng rng(61);
  Tensor<double> p(Shape(8, 1)), q(Shape(8, 1));
  for (auto& v : p.data) v = rng.uniform(-1, 1);
  for (auto& v : q.data) v = rng.uniform(-1, 1);
  const auto gc =
      check_gradients({p, q}, [](Tape<double>& t, std::vector<NodeId>& ids) {
        return mse_loss(t, ids[0], ids[1]);
      });
  CHECK(gc.max_err < 1e-6);
}

TEST_CASE("pcc examples, oracle value and properties") {
  Tape<double> tape;
  CHECK(tape.value(pcc_loss(tape, leafv(tape, {1, 2, 4}), leafv(tape, {1, 2, 4})))
            .data[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(tape.value(pcc_loss(tape, leafv(tape, {1, 2, 3}), leafv(tape, {3, 2, 1})))
            .data[0] == doctest::Approx(2.0).epsilon(1e-12));

  const std::vector<double> a = {0, 1, 2, 5}, b = {1, 1, 3, 4};
  const NodeId l = pcc_loss(tape, leafv(tape, a), leafv(tape, b));
  CHECK(tape.value(l).data[0] ==
        doctest::Approx(1.0 - pearson(a, b)).epsilon(1e-12));

  // degenerate variance: constant loss 1, flagged, no gradient
  bool degenerate = false;
  Tape<double> t2;
  const NodeId pred = leafv(t2, {2, 2, 2});
  const NodeId ld = pcc_loss(t2, pred, leafv(t2, {1, 2, 3}), &degenerate);
  CHECK(degenerate);
  CHECK(t2.value(ld).data[0] == 1.0);
  t2.backward(ld);
  CHECK(t2.grad(pred).data == std::vector<double>{0, 0, 0});

  // range on random pairs
  Rng rng(62);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> p(16), q(16);
    for (auto& v : p) v = rng.uniform(0, 255);
    for (auto& v : q) v = rng.uniform(0, 255);
    Tape<double> tp;
    const double v = tp.value(pcc_loss(tp, leafv(tp, p), leafv(tp, q))).data[0];
    CHECK(v >= 0.0);
    CHECK(v <= 2.0);
  }

  // positive-affine invariance within 1e-9
  std::vector<double> p(32), q(32);
  for (auto& v : p) v = rng.uniform(0, 10);
  for (auto& v : q) v = rng.uniform(0, 10);
  std::vector<double> scaled(32);
  for (std::size_t i = 0; i < 32; ++i) scaled[i] = 3.7 * p[i] + 11.0;
  Tape<double> t3;
  const double base = t3.value(pcc_loss(t3, leafv(t3, p), leafv(t3, q))).data[0];
  const double aff =
      t3.value(pcc_loss(t3, leafv(t3, scaled), leafv(t3, q))).data[0];
  CHECK(std::abs(base - aff) < 1e-9);

  // gradient through the correlation graph
  Tensor<double> tp(Shape(8, 1)), tq(Shape(8, 1));
  for (auto& v : tp.data) v = rng.uniform(-1, 1);
  for (auto& v : tq.data) v = rng.uniform(-1, 1);
  const auto gc =
      check_gradients({tp, tq}, [](Tape<double>& t, std::vector<NodeId>& ids) {
        return pcc_loss(t, ids[0], ids[1]);
      });
  CHECK(gc.max_err < 1e-4);
}

TEST_CASE("joint loss composition") {
  Rng rng(63);
  std::vector<double> p(16), q(16);
  for (auto& v : p) v = rng.uniform(0, 1);
  for (auto& v : q) v = rng.uniform(0, 1);

  Tape<double> tape;
  const double mse = tape.value(mse_loss(tape, leafv(tape, p), leafv(tape, q))).data[0];
  const double pcc = tape.value(pcc_loss(tape, leafv(tape, p), leafv(tape, q))).data[0];
  const double j0 =
      tape.value(joint_loss(tape, leafv(tape, p), leafv(tape, q), 0.0)).data[0];
  const double j1 =
      tape.value(joint_loss(tape, leafv(tape, p), leafv(tape, q), 1.0)).data[0];
  const double j2 =
      tape.value(joint_loss(tape, leafv(tape, p), leafv(tape, q), 2.0)).data[0];
  CHECK(j0 == mse);
  CHECK(j1 == doctest::Approx(mse + pcc).epsilon(1e-12));
  CHECK(j2 - j1 == doctest::Approx(j1 - j0).epsilon(1e-9));  // linear in alpha

  Tape<double> ts;
  CHECK(ts.value(joint_loss(ts, leafv(ts, p), leafv(ts, p), 1.0)).data[0] == 0.0);
}

TEST_CASE("adam: no-op on zero gradient, hand-traced first step") {
  Tensor<float> theta(Shape(3), {1.0f, -2.0f, 0.5f});
  Tensor<float> zero(Shape(3));
  AdamState<float> state;
  AdamConfig cfg;
  cfg.learning_rate = 1e-4;
  adam_step<float>({&theta}, {&zero}, state, cfg);
  CHECK(theta.data == std::vector<float>{1.0f, -2.0f, 0.5f});
  CHECK(state.step == 1);

  // first step with g=2: theta' = 1 - lr * g/(|g| + eps)
  Tensor<double> th(Shape(1), {1.0});
  Tensor<double> g(Shape(1), {2.0});
  AdamState<double> st;
  AdamConfig dcfg;
  dcfg.learning_rate = 1e-4;
  adam_step<double>({&th}, {&g}, st, dcfg);
  CHECK(th.data[0] == doctest::Approx(1.0 - 1e-4 * (2.0 / (2.0 + 1e-8)))
                          .epsilon(1e-12));

  Tensor<double> bad(Shape(2));
  CHECK_THROWS_AS((adam_step<double>({&th}, {&bad}, st, dcfg)), Error);
}

TEST_CASE("adam drives a quadratic to its minimum") {
  // f(theta) = theta^2 from theta=1 with lr=0.1: |theta| < 0.05 in 100 steps
  Tensor<double> theta(Shape(1), {1.0});
  AdamState<double> state;
  AdamConfig cfg;
  cfg.learning_rate = 0.1;
  for (int i = 0; i < 100; ++i) {
    Tensor<double> grad(Shape(1), {2.0 * theta.data[0]});
    adam_step<double>({&theta}, {&grad}, state, cfg);
  }
  CHECK(std::abs(theta.data[0]) < 0.05);
}

TEST_CASE("patch generation covers every point") {
  Rng rng(64);
  SUBCASE("whole cloud fits one patch") {
    const PointCloud pc = random_cloud(rng, 100, 6);
    const auto patches = generate_patches(pc, 200);
    REQUIRE(patches.size() == 1);
    CHECK(patches[0].indices.size() == 100);
  }
  SUBCASE("5000 points, patch size 2048") {
    const PointCloud pc = random_cloud(rng, 5000, 8);
    const auto patches = generate_patches(pc, 2048);
    std::vector<bool> covered(5000, false);
    for (const Patch& p : patches) {
      CHECK(p.indices.size() == 2048);
      std::vector<bool> in_patch(5000, false);
      for (int32_t i : p.indices) {
        CHECK(!in_patch[std::size_t(i)]);  // indices unique within a patch
        in_patch[std::size_t(i)] = true;
        covered[std::size_t(i)] = true;
      }
    }
    // coverage audit: every point appears in at least one patch
    for (bool c : covered) REQUIRE(c);
  }
  SUBCASE("coverage holds across sizes") {
    for (const std::size_t ps : {7, 64, 333}) {
      const PointCloud pc = random_cloud(rng, 1000, 7);
      std::vector<bool> covered(1000, false);
      for (const Patch& p : generate_patches(pc, ps))
        for (int32_t i : p.indices) covered[std::size_t(i)] = true;
      for (bool c : covered) REQUIRE(c);
    }
  }
}

TEST_CASE("patch fusion averages overlaps") {
  Patch a, b;
  a.indices = {0, 1, 2};
  b.indices = {2, 3};
  SUBCASE("single patch is a passthrough") {
    const auto out = fuse_patches({a}, {{1.0f, 2.0f, 3.0f}}, 3);
    CHECK(out == std::vector<float>{1, 2, 3});
  }
  SUBCASE("shared point averages its two predictions") {
    const auto out = fuse_patches({a, b}, {{1, 2, 10}, {20, 4}}, 4);
    CHECK(out == std::vector<float>{1, 2, 15, 4});
  }
  SUBCASE("constant predictions stay constant") {
    const auto out = fuse_patches({a, b}, {{5, 5, 5}, {5, 5}}, 4);
    CHECK(out == std::vector<float>{5, 5, 5, 5});
  }
}

namespace {

// small synthetic supervised sample: smooth field + seeded noise
TrainSample synthetic_sample(Rng& rng, std::size_t n, double noise) {
  TrainSample s;
  PointCloud clean = random_cloud(rng, n, 6);
  for (std::size_t i = 0; i < n; ++i) {
    const int32_t* p = clean.point(i);
    const double y = 120.0 + 60.0 * std::sin(double(p[0]) / 9.0) *
                                  std::cos(double(p[1]) / 11.0) +
                     20.0 * std::sin(double(p[2]) / 7.0);
    clean.attr(i)[0] = float(std::clamp(y, 0.0, 255.0));
    clean.attr(i)[1] = 128.0f;
    clean.attr(i)[2] = 128.0f;
  }
  auto noisy = [&](uint64_t stream) {
    PointCloud pc = clean;
    Rng nr = Rng::derive(7, stream);
    for (std::size_t i = 0; i < n; ++i) {
      const double u1 = std::max(nr.uniform(), 1e-12);
      const double u2 = nr.uniform();
      const double gauss =
          std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
      pc.attr(i)[0] = float(
          std::clamp(double(pc.attr(i)[0]) + noise * gauss, 0.0, 255.0));
    }
    return pc;
  };
  s.original = clean;
  s.triplet.cur = noisy(1);
  s.triplet.prev = noisy(2);
  s.triplet.next = noisy(3);
  return s;
}

}  // namespace

TEST_CASE("training decreases the loss and is seed-deterministic") {
  Rng rng(65);
  const TrainSample sample = synthetic_sample(rng, 160, 6.0);

  TrainConfig cfg;
  cfg.epochs = 8;
  cfg.batch_size = 4;
  cfg.learning_rate = 1e-3;
  cfg.patch_size = 64;
  cfg.seed = 5;
  cfg.network.branch_widths = {4, 8, 8};
  cfg.network.merge_widths = {16, 16};
  cfg.network.gnfa_width = 6;
  cfg.network.stf_widths = {16, 8, 4};
  cfg.network.k = 6;

  const TrainResult a = train({sample}, Component::Y, cfg);
  CHECK(a.epoch_loss.size() == 8);
  CHECK(a.epoch_loss.back() < a.epoch_loss.front());

  const TrainResult b = train({sample}, Component::Y, cfg);
  CHECK(a.epoch_loss == b.epoch_loss);  // bitwise-deterministic history
  bool params_equal = true;
  ModelParams<float> ap = a.params, bp = b.params;
  std::vector<const Tensor<float>*> av, bv;
  ap.for_each([&](const std::string&, Tensor<float>& t) { av.push_back(&t); });
  bp.for_each([&](const std::string&, Tensor<float>& t) { bv.push_back(&t); });
  for (std::size_t i = 0; i < av.size(); ++i)
    params_equal &= (av[i]->data == bv[i]->data);
  CHECK(params_equal);

  TrainConfig mse_only = cfg;
  mse_only.alpha = 0.0;
  const TrainResult c = train({sample}, Component::Y, mse_only);
  CHECK(c.epoch_loss != a.epoch_loss);  // alpha changes the optimized loss

  CHECK_THROWS_AS(train({}, Component::Y, cfg), Error);
}

TEST_CASE("manifest parsing") {
  TempDir dir("manifest");
  {
    std::ofstream out(dir.file("m.json"));
    out << R"({"component": "Cb", "samples": [
      {"prev": "a.ply", "cur": "b.ply", "next": "c.ply", "original": "o.ply"}
    ]})";
  }
  const Manifest m = load_manifest(dir.file("m.json"));
  CHECK(m.component == Component::Cb);
  REQUIRE(m.samples.size() == 1);
  CHECK(m.samples[0].cur == "b.ply");

  {
    std::ofstream out(dir.file("bad.json"));
    out << R"({"samples": []})";
  }
  CHECK_THROWS_AS(load_manifest(dir.file("bad.json")), Error);
  CHECK_THROWS_AS(load_manifest(dir.file("missing.json")), Error);
}
