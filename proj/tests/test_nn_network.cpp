#include "doctest.h"
#include "rpil/nn/adam.hpp"
#include "rpil/nn/gradcheck.hpp"
#include "rpil/nn/network.hpp"

#include <random>

using namespace rpil;
using namespace rpil::nn;

namespace {

Mat<double> random_scans(int n, int width, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> d(0.1, 1.8), c(0.0, 1.0);
  Mat<double> x(4, n * width);
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    x(0, j) = d(rng);
    for (int k = 1; k < 4; ++k) x(k, j) = c(rng);
  }
  return x;
}

NormStats some_norm() {
  NormStats n;
  n.mean << 1.2f, 0.1f, 0.05f, 0.05f;
  n.std << 0.5f, 0.3f, 0.2f, 0.2f;
  return n;
}

NetworkParams<double> random_params(const NetworkSpec& spec, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto p = init_params<double>(spec, some_norm(), rng);
  std::uniform_real_distribution<double> u(0.0, 0.1);
  for (auto& c : p.conv) c.bias = c.bias.unaryExpr([&](double) { return u(rng); });
  for (auto& d : p.dense) d.bias = d.bias.unaryExpr([&](double) { return u(rng); });
  return p;
}

}  // namespace

TEST_CASE("architecture shape chains") {
  const auto base = NetworkSpec::make(Variant::kBaseline);
  CHECK(base.stage_widths() == std::vector<int>{180, 90, 45, 45});
  CHECK(base.flatten_channels() == 32);
  CHECK(base.flatten_size() == 1440);

  const auto pool = NetworkSpec::make(Variant::kMaxpool);
  CHECK(pool.stage_widths() == std::vector<int>{180, 90, 45, 15, 15});
  CHECK(pool.flatten_channels() == 96);
  CHECK(pool.flatten_size() == 1440);

  const auto t2 = NetworkSpec::make(Variant::kTask2);
  CHECK(t2.dense.front().in == 1443);
  CHECK(t2.goal_input);

  for (auto v : {Variant::kBaseline, Variant::kMaxpool, Variant::kBaselineDropout, Variant::kMaxpoolDropout,
                 Variant::kTask2}) {
    const auto s = NetworkSpec::make(v);
    CHECK_NOTHROW(s.validate());
    CHECK(parse_variant(to_string(v)) == v);
    REQUIRE(s.dense.size() == 3);
    CHECK(s.dense[0].out == 128);
    CHECK(s.dense[1].out == 128);
    CHECK(s.dense[2].out == 2);
    CHECK_FALSE(s.dense[2].relu);
    CHECK(s.has_dropout() == (v != Variant::kBaseline && v != Variant::kMaxpool));
  }
  CHECK_THROWS_AS(parse_variant("resnet"), std::invalid_argument);

  auto broken = NetworkSpec::make(Variant::kBaseline);
  broken.dense[0].in = 1439;
  CHECK_THROWS_AS(broken.validate(), ShapeError);
}

TEST_CASE("zero weights give zero output") {
  const auto spec = NetworkSpec::make(Variant::kMaxpoolDropout);
  std::mt19937_64 rng(1);
  auto p = init_params<double>(spec, some_norm(), rng).zeros_like();
  const auto out = forward_batch<double>(spec, p, random_scans(3, 180, rng), nullptr, Mode::kEval);
  CHECK(out.isZero(0));
}

TEST_CASE("eval forward is deterministic and finite") {
  std::mt19937_64 rng(2);
  const auto spec = NetworkSpec::make(Variant::kBaseline);
  const auto p = init_params<float>(spec, some_norm(), rng);
  ScanFrame scan;
  scan.distances = Eigen::VectorXd::LinSpaced(180, 0.2, 1.8);
  scan.colors = Eigen::MatrixXd::Constant(180, 3, 0.5);
  const auto a = forward(spec, p, scan, std::nullopt);
  const auto b = forward(spec, p, scan, std::nullopt);
  CHECK(std::isfinite(a.left));
  CHECK(std::isfinite(a.right));
  CHECK(a.left == b.left);
  CHECK(a.right == b.right);

  const auto t2 = NetworkSpec::make(Variant::kTask2);
  const auto p2 = init_params<float>(t2, some_norm(), rng);
  CHECK_THROWS_AS(forward(t2, p2, scan, std::nullopt), ShapeError);
  CHECK_NOTHROW(forward(t2, p2, scan, Pose(0.5, 0.5, 1.0)));
}

TEST_CASE("batched forward equals per-sample forward") {
  std::mt19937_64 rng(3);
  const auto spec = NetworkSpec::make(Variant::kMaxpool);
  const auto p = random_params(spec, 4);
  const auto x = random_scans(4, 180, rng);
  const auto all = forward_batch<double>(spec, p, x, nullptr, Mode::kEval);
  for (int n = 0; n < 4; ++n) {
    const Mat<double> one = x.middleCols(n * 180, 180);
    CHECK((forward_batch<double>(spec, p, one, nullptr, Mode::kEval) - all.col(n)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("conv stack is equivariant to circular shifts") {
  std::mt19937_64 rng(5);
  const auto spec = NetworkSpec::make(Variant::kBaseline);
  for (int trial = 0; trial < 5; ++trial) {
    const auto p = random_params(spec, 10 + trial);
    const Mat<double> x = random_scans(1, 180, rng);
    for (int shift : {2, 4}) {
      Mat<double> xs(4, 180);
      for (int i = 0; i < 180; ++i) xs.col((i + shift) % 180) = x.col(i);
      ForwardCache<double> a, b;
      forward_batch<double>(spec, p, x, nullptr, Mode::kEval, {}, &a);
      forward_batch<double>(spec, p, xs, nullptr, Mode::kEval, {}, &b);
      // Stride-2 stages halve the shift: 2 input samples move conv1 by one, 4 move conv2 by one.
      const int stage = shift == 2 ? 0 : 1;
      const Mat<double>& ya = a.stage_outputs[stage];
      const Mat<double>& yb = b.stage_outputs[stage];
      const int w = int(ya.cols());
      // Equal up to GEMM blocking order.
      for (int j = 0; j < w; ++j) CHECK((yb.col((j + 1) % w) - ya.col(j)).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("train-mode dropout is unbiased on the dropped layer") {
  std::mt19937_64 rng(6);
  const auto spec = NetworkSpec::make(Variant::kMaxpoolDropout);
  const auto p = random_params(spec, 7);
  const Mat<double> x = random_scans(1, 180, rng);
  ForwardCache<double> eval;
  forward_batch<double>(spec, p, x, nullptr, Mode::kEval, {}, &eval);
  const Vec<double> expect = eval.dense_outputs[0].col(0);

  const int n = 10000;
  Vec<double> sum = Vec<double>::Zero(expect.size()), sum_sq = sum;
  std::mt19937_64 drop(8);
  for (int i = 0; i < n; ++i) {
    ForwardCache<double> c;
    forward_batch<double>(spec, p, x, nullptr, Mode::kTrain, {&drop, nullptr}, &c);
    sum += c.dense_outputs[0].col(0);
    sum_sq += c.dense_outputs[0].col(0).cwiseAbs2();
  }
  const Vec<double> mean = sum / n;
  const Vec<double> se = ((sum_sq / n - mean.cwiseAbs2()).cwiseMax(0.0) / n).cwiseSqrt();
  int active = 0;
  for (Eigen::Index i = 0; i < mean.size(); ++i) {
    if (expect[i] == 0.0) {
      CHECK(mean[i] == 0.0);
      continue;
    }
    ++active;
    // Per unit, with a Bonferroni margin for the number of units tested.
    CHECK(std::abs(mean[i] - expect[i]) <= 4 * se[i]);
  }
  REQUIRE(active > 20);
  const double total_se = std::sqrt((sum_sq / n - mean.cwiseAbs2()).sum() / n);
  CHECK(std::abs(mean.sum() - expect.sum()) <= 3 * total_se);
}

TEST_CASE("backward: zero loss and final-layer bias gradient") {
  std::mt19937_64 rng(9);
  const auto spec = NetworkSpec::make(Variant::kBaseline);
  const auto p = random_params(spec, 11);
  const Mat<double> x = random_scans(5, 180, rng);
  ForwardCache<double> c;
  const Mat<double> pred = forward_batch<double>(spec, p, x, nullptr, Mode::kEval, {}, &c);

  const auto zero = backward_batch(spec, p, c, loss_gradient(LossKind::kMse, pred, pred));
  zero.for_each_trainable([](const std::string& name, const auto& a) {
    INFO(name);
    CHECK(a.isZero(0));
  });

  const Mat<double> target = Mat<double>::Random(2, 5);
  const auto g = backward_batch(spec, p, c, loss_gradient(LossKind::kMse, pred, target));
  const Vec<double> expect = (2.0 / (5 * 2)) * (pred - target).rowwise().sum();
  CHECK((g.dense.back().bias - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("gradient checks pass for every variant and loss") {
  for (auto v : {Variant::kBaseline, Variant::kMaxpool, Variant::kBaselineDropout, Variant::kMaxpoolDropout,
                 Variant::kTask2}) {
    for (auto l : {LossKind::kMse, LossKind::kSmoothL1}) {
      const auto r = gradient_check(v, 42, l);
      INFO(to_string(v), " ", to_string(l), " worst ", r.worst_array);
      CHECK(r.max_rel_error < 1e-4);
      CHECK(r.nonzero > r.checked / 4);
    }
  }
}

TEST_CASE("gradient_check notices a wrong gradient") {
  CHECK(relative_error(1.0, 1.0) == 0.0);
  CHECK(relative_error(1.0, 1.1) == doctest::Approx(0.1 / 1.1));
  CHECK(relative_error(0.0, 1e-9) < 1e-2);
}

TEST_CASE("adam_step") {
  const auto spec = NetworkSpec::shrunken(Variant::kBaseline);
  const auto p0 = random_params(spec, 12);
  const AdamConfig cfg;

  SUBCASE("zero gradient leaves parameters unchanged") {
    auto p = p0;
    AdamState<double> st(p);
    adam_step(p, p.zeros_like(), st, cfg);
    CHECK(p == p0);
  }
  SUBCASE("first step moves every scalar by about lr against the gradient sign") {
    auto p = p0;
    auto g = p0.zeros_like();
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> u(0.01, 5.0);
    std::bernoulli_distribution sign(0.5);
    g.for_each_trainable([&](const std::string&, auto& a) {
      a = a.unaryExpr([&](double) { return sign(rng) ? u(rng) : -u(rng); });
    });
    AdamState<double> st(p);
    adam_step(p, g, st, cfg);
    auto pv = trainable_views(p);
    auto qv = trainable_views(p0);
    auto gv = trainable_views(std::as_const(g));
    for (std::size_t i = 0; i < pv.size(); ++i)
      for (std::size_t j = 0; j < pv[i].size(); ++j) {
        const double step = qv[i][j] - pv[i][j];
        CHECK(step == doctest::Approx(cfg.lr * (gv[i][j] > 0 ? 1 : -1)).epsilon(1e-6));
      }
  }
  SUBCASE("identical states give identical results") {
    auto a = p0, b = p0;
    const auto g = random_params(spec, 14);
    AdamState<double> sa(a), sb(b);
    for (int i = 0; i < 3; ++i) {
      adam_step(a, g, sa, cfg);
      adam_step(b, g, sb, cfg);
    }
    CHECK(a == b);
    CHECK(sa.step == 3);
  }
}

TEST_CASE("parameter bookkeeping") {
  const auto spec = NetworkSpec::make(Variant::kMaxpoolDropout);
  std::mt19937_64 rng(15);
  const auto p = init_params<float>(spec, some_norm(), rng);
  // alpha, beta, 3 conv, 3 fc.
  std::vector<std::string> names;
  p.for_each_trainable([&](const std::string& n, const auto&) { names.push_back(n); });
  CHECK(names.size() == 2 + 2 * 3 + 2 * 3);
  CHECK(names.front() == "alpha");
  CHECK(names.back() == "fc3.bias");
  CHECK(p.cast<double>().cast<float>() == p);
  CHECK(p.all_finite());
  CHECK(p.parameter_count() == 8 + (32 * 20 + 32) + (96 * 160 + 96) + (96 * 480 + 96) + (128 * 1440 + 128) +
                                   (128 * 128 + 128) + (2 * 128 + 2));
}
