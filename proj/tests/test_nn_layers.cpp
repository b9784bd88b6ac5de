#include "doctest.h"
#include "rpil/nn/layers.hpp"

#include <random>

using namespace rpil::nn;
using M = Mat<double>;
using V = Vec<double>;

namespace {

M row(std::initializer_list<double> xs) {
  M m(1, xs.size());
  Eigen::Index i = 0;
  for (double x : xs) m(0, i++) = x;
  return m;
}

M random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-1, 1);
  M m(r, c);
  for (Eigen::Index j = 0; j < c; ++j)
    for (Eigen::Index i = 0; i < r; ++i) m(i, j) = u(rng);
  return m;
}

// Direct summation with wrapped indices, one sample.
M conv_reference(const M& x, const M& w, const V& b, int k, int stride, int pad) {
  const int width = int(x.cols());
  const int out_w = (width + 2 * pad - k) / stride + 1;
  M out(w.rows(), out_w);
  for (Eigen::Index o = 0; o < w.rows(); ++o)
    for (int j = 0; j < out_w; ++j) {
      double s = b[o];
      for (Eigen::Index c = 0; c < x.rows(); ++c)
        for (int t = 0; t < k; ++t) s += w(o, c * k + t) * x(c, ((j * stride - pad + t) % width + width) % width);
      out(o, j) = s;
    }
  return out;
}

}  // namespace

TEST_CASE("window widths") {
  CHECK(window_output_width(180, 5, 2, 2) == 90);
  CHECK(window_output_width(90, 5, 2, 2) == 45);
  CHECK(window_output_width(45, 3, 1, 1) == 45);
  CHECK(window_output_width(45, 3, 3, 1) == 15);
  CHECK_THROWS_AS(window_output_width(2, 7, 1, 0), ShapeError);
}

TEST_CASE("conv1d_circular examples") {
  const M x = row({1, 2, 3, 4, 5, 6});
  CHECK(conv1d_circular<double>(x, 6, M::Ones(1, 1), V::Zero(1), 1, 1, 0) == x);

  const M y = conv1d_circular<double>(row({1, 2, 3, 4}), 4, M::Ones(1, 3), V::Zero(1), 3, 1, 1);
  CHECK(y == row({7, 6, 9, 8}));

  std::mt19937_64 rng(1);
  const M big = random_mat(4, 180, rng);
  CHECK(conv1d_circular<double>(big, 180, random_mat(16, 20, rng), V::Zero(16), 5, 2, 2).cols() == 90);
}

TEST_CASE("conv1d_circular matches direct summation on batches") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const int cin = 1 + trial % 3, cout = 2, k = 1 + 2 * (trial % 3), stride = 1 + trial % 2, width = 6 + trial;
    const int pad = k / 2;
    const M w = random_mat(cout, cin * k, rng);
    const V b = random_mat(cout, 1, rng);
    const M x = random_mat(cin, 3 * width, rng);
    const M y = conv1d_circular<double>(x, width, w, b, k, stride, pad);
    const int out_w = window_output_width(width, k, stride, pad);
    for (int n = 0; n < 3; ++n) {
      const M ref = conv_reference(x.middleCols(n * width, width), w, b, k, stride, pad);
      CHECK((y.middleCols(n * out_w, out_w) - ref).cwiseAbs().maxCoeff() < 1e-12);
    }
  }
}

TEST_CASE("col2im is the adjoint of im2col") {
  std::mt19937_64 rng(3);
  for (int width : {3, 8, 45}) {
    const M x = random_mat(3, 2 * width, rng);
    const M cols = im2col_circular(x, width, 5, 2, 2);
    const M g = random_mat(cols.rows(), cols.cols(), rng);
    const double lhs = (cols.array() * g.array()).sum();
    const double rhs = (x.array() * col2im_circular(g, 3, width, 5, 2, 2).array()).sum();
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-12));
  }
}

TEST_CASE("maxpool1d_circular") {
  IndexMat arg;
  const M y = maxpool1d_circular<double>(row({1, 5, 2, 0, 3, 9}), 6, 3, 3, 1, &arg);
  CHECK(y == row({9, 3}));
  CHECK(arg(0, 0) == 5);
  CHECK(arg(0, 1) == 4);

  const M c = M::Constant(2, 45, 0.7);
  const M p = maxpool1d_circular<double>(c, 45, 3, 3, 1);
  CHECK(p.cols() == 15);
  CHECK((p.array() == 0.7).all());

  // Ties go to the first window entry; gradient routes to the winners only.
  const M g = maxpool1d_backward<double>(row({1.0, 2.0}), arg, 6);
  CHECK(g == row({0, 0, 0, 0, 2, 1}));
}

TEST_CASE("standardize_affine") {
  const V mean = (V(4) << 1, 2, 3, 4).finished();
  const V sd = (V(4) << 0.5, 1, 2, 4).finished();
  const V one = V::Ones(4), zero = V::Zero(4);
  const M at_mean = mean.replicate(1, 180);
  CHECK(standardize_affine<double>(at_mean, mean, sd, one, zero).isZero(0));
  CHECK((standardize_affine<double>((mean + sd).replicate(1, 180), mean, sd, one, zero).array() == 1.0).all());
  CHECK((standardize_affine<double>(at_mean, mean, sd, V::Constant(4, 2.0), one).array() == 1.0).all());
  CHECK_THROWS_AS(standardize_affine<double>(M::Zero(3, 5), mean, sd, one, zero), ShapeError);
}

TEST_CASE("losses") {
  const M t = M::Zero(2, 3);
  CHECK(loss_mse<double>(t, t) == 0.0);
  CHECK(loss_mse<double>(M::Ones(2, 3), t) == 1.0);
  const M p = (M(2, 1) << 1, 2).finished();
  CHECK(loss_mse<double>(p, M::Zero(2, 1)) == 2.5);

  CHECK(smooth_l1_term(0.5) == 0.125);
  CHECK(smooth_l1_term(-0.5) == 0.125);
  CHECK(smooth_l1_term(1.0) == 0.5);
  CHECK(0.5 * 1.0 * 1.0 == 1.0 - 0.5);
  CHECK(smooth_l1_term(2.0) == 1.5);
  CHECK(smooth_l1_term(-2.0) == 1.5);
  CHECK(loss_smooth_l1<double>(M::Constant(2, 2, 2.0), M::Zero(2, 2)) == 1.5);
}

TEST_CASE("smooth L1 is continuous, C1 at the knee and below d^2 / 2") {
  for (double d = -4; d <= 4; d += 1e-3) CHECK(smooth_l1_term(d) <= 0.5 * d * d + 1e-15);
  const double h = 1e-7;
  CHECK(std::abs(smooth_l1_term(1.0 + h) - smooth_l1_term(1.0 - h)) < 3 * h);
  const double left = (smooth_l1_term(1.0) - smooth_l1_term(1.0 - h)) / h;
  const double right = (smooth_l1_term(1.0 + h) - smooth_l1_term(1.0)) / h;
  CHECK(left == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(right == doctest::Approx(1.0).epsilon(1e-5));
}

TEST_CASE("loss gradients match finite differences") {
  std::mt19937_64 rng(4);
  const M pred = 3 * random_mat(2, 5, rng), target = random_mat(2, 5, rng);
  for (auto kind : {LossKind::kMse, LossKind::kSmoothL1}) {
    const M g = loss_gradient(kind, pred, target);
    for (Eigen::Index i = 0; i < pred.size(); ++i) {
      M a = pred, b = pred;
      a(i) += 1e-6;
      b(i) -= 1e-6;
      CHECK(g(i) == doctest::Approx((loss(kind, a, target) - loss(kind, b, target)) / 2e-6).epsilon(1e-6));
    }
  }
}

TEST_CASE("dropout mask") {
  std::mt19937_64 rng(5);
  const M m = dropout_mask<double>(200, 500, 0.5, rng);
  CHECK(((m.array() == 0.0) || (m.array() == 2.0)).all());
  CHECK(m.mean() == doctest::Approx(1.0).epsilon(0.02));
  std::mt19937_64 a(6), b(6);
  CHECK(dropout_mask<double>(5, 5, 0.5, a) == dropout_mask<double>(5, 5, 0.5, b));
}

TEST_CASE("relu") {
  M x = row({-1, 0, 2});
  relu_inplace(x);
  CHECK(x == row({0, 0, 2}));
  M g = row({5, 5, 5});
  relu_backward_inplace(g, x);
  CHECK(g == row({0, 0, 5}));
}
