#pragma once

// Batched layer primitives. Activations of a 1-D feature map batch are stored
// as a (channels x batch*width) matrix; column n*width + w holds position w of
// sample n. Dense activations are (features x batch).

#include <Eigen/Core>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

namespace rpil::nn {

template <typename S>
using Mat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic>;
template <typename S>
using Vec = Eigen::Matrix<S, Eigen::Dynamic, 1>;
using IndexMat = Eigen::Matrix<Eigen::Index, Eigen::Dynamic, Eigen::Dynamic>;

class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Output width of a padded sliding window.
inline int window_output_width(int width, int kernel, int stride, int pad) {
  if (width < 1 || kernel < 1 || stride < 1 || pad < 0) throw ShapeError("window: non-positive extent");
  const int span = width + 2 * pad - kernel;
  if (span < 0) throw ShapeError("window: kernel wider than padded input");
  return span / stride + 1;
}

/// Index into a circularly padded row of length `width`.
inline Eigen::Index wrap(Eigen::Index i, Eigen::Index width) {
  const Eigen::Index m = i % width;
  return m < 0 ? m + width : m;
}

// --- convolution ---------------------------------------------------------

/// Unfolds circularly padded windows: result(c*K + k, n*W' + j) =
/// input(c, n*W + wrap(j*stride - pad + k)).
template <typename S>
Mat<S> im2col_circular(const Mat<S>& input, int width, int kernel, int stride, int pad) {
  if (input.cols() % width != 0) throw ShapeError("im2col: columns not a multiple of width");
  const Eigen::Index batch = input.cols() / width;
  const int out_w = window_output_width(width, kernel, stride, pad);
  const Eigen::Index channels = input.rows();
  Mat<S> cols(channels * kernel, batch * out_w);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (int j = 0; j < out_w; ++j) {
      const Eigen::Index col = n * out_w + j;
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index src = n * width + wrap(j * stride - pad + k, width);
        for (Eigen::Index c = 0; c < channels; ++c) cols(c * kernel + k, col) = input(c, src);
      }
    }
  }
  return cols;
}

/// Adjoint of im2col_circular: scatters window gradients back, accumulating
/// every wrapped duplicate.
template <typename S>
Mat<S> col2im_circular(const Mat<S>& cols, Eigen::Index channels, int width, int kernel, int stride, int pad) {
  const int out_w = window_output_width(width, kernel, stride, pad);
  const Eigen::Index batch = cols.cols() / out_w;
  Mat<S> grad = Mat<S>::Zero(channels, batch * width);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (int j = 0; j < out_w; ++j) {
      const Eigen::Index col = n * out_w + j;
      for (int k = 0; k < kernel; ++k) {
        const Eigen::Index dst = n * width + wrap(j * stride - pad + k, width);
        for (Eigen::Index c = 0; c < channels; ++c) grad(c, dst) += cols(c * kernel + k, col);
      }
    }
  }
  return grad;
}

/// Circularly padded cross-correlation. `weights` is (C_out x C_in*K) with
/// column c*K + k; `bias` has C_out entries.
template <typename S>
Mat<S> conv1d_circular(const Mat<S>& input, int width, const Mat<S>& weights, const Vec<S>& bias, int kernel,
                       int stride, int pad) {
  if (weights.cols() != input.rows() * kernel || bias.size() != weights.rows())
    throw ShapeError("conv1d: weight shape does not match input channels");
  Mat<S> out = weights * im2col_circular(input, width, kernel, stride, pad);
  out.colwise() += bias;
  return out;
}

// --- pooling -------------------------------------------------------------

/// Circularly padded max pooling. `argmax` receives, for every output entry,
/// the input column that won (first maximum on ties).
template <typename S>
Mat<S> maxpool1d_circular(const Mat<S>& input, int width, int kernel, int stride, int pad, IndexMat* argmax = nullptr) {
  if (input.cols() % width != 0) throw ShapeError("maxpool: columns not a multiple of width");
  const Eigen::Index batch = input.cols() / width;
  const int out_w = window_output_width(width, kernel, stride, pad);
  Mat<S> out(input.rows(), batch * out_w);
  if (argmax) argmax->resize(input.rows(), batch * out_w);
  for (Eigen::Index n = 0; n < batch; ++n) {
    for (int j = 0; j < out_w; ++j) {
      for (Eigen::Index c = 0; c < input.rows(); ++c) {
        Eigen::Index best = n * width + wrap(j * stride - pad, width);
        for (int k = 1; k < kernel; ++k) {
          const Eigen::Index src = n * width + wrap(j * stride - pad + k, width);
          if (input(c, src) > input(c, best)) best = src;
        }
        out(c, n * out_w + j) = input(c, best);
        if (argmax) (*argmax)(c, n * out_w + j) = best;
      }
    }
  }
  return out;
}

template <typename S>
Mat<S> maxpool1d_backward(const Mat<S>& grad_out, const IndexMat& argmax, Eigen::Index input_cols) {
  Mat<S> grad = Mat<S>::Zero(grad_out.rows(), input_cols);
  for (Eigen::Index j = 0; j < grad_out.cols(); ++j)
    for (Eigen::Index c = 0; c < grad_out.rows(); ++c) grad(c, argmax(c, j)) += grad_out(c, j);
  return grad;
}

// --- pointwise -----------------------------------------------------------

template <typename S>
void relu_inplace(Mat<S>& x) {
  x = x.cwiseMax(S(0));
}

/// Zeroes gradient entries where the forward output was clipped.
template <typename S>
void relu_backward_inplace(Mat<S>& grad, const Mat<S>& output) {
  grad = (output.array() > S(0)).select(grad, S(0));
}

/// Inverted-dropout mask: each entry is 0 with probability p, 1/(1-p) otherwise.
template <typename S, typename Rng>
Mat<S> dropout_mask(Eigen::Index rows, Eigen::Index cols, double p, Rng& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  const S scale = S(1.0 / (1.0 - p));
  Mat<S> mask(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) mask(i, j) = keep(rng) ? scale : S(0);
  return mask;
}

/// Channel-wise z = alpha * (x - mean) / std + beta. Also returns the
/// standardized y through `standardized` when requested.
template <typename S>
Mat<S> standardize_affine(const Mat<S>& x, const Vec<S>& mean, const Vec<S>& std, const Vec<S>& alpha,
                          const Vec<S>& beta, Mat<S>* standardized = nullptr) {
  if (mean.size() != x.rows() || std.size() != x.rows() || alpha.size() != x.rows() || beta.size() != x.rows())
    throw ShapeError("standardize: channel count mismatch");
  Mat<S> y = ((x.colwise() - mean).array().colwise() / std.array()).matrix();
  Mat<S> z = (y.array().colwise() * alpha.array()).matrix();
  z.colwise() += beta;
  if (standardized) *standardized = std::move(y);
  return z;
}

// --- losses --------------------------------------------------------------

enum class LossKind { kMse, kSmoothL1 };

inline std::string to_string(LossKind k) { return k == LossKind::kMse ? "mse" : "smooth_l1"; }

/// Per-element Smooth L1 term: quadratic inside |d| < 1, linear outside.
template <typename S>
S smooth_l1_term(S d) {
  const S a = std::abs(d);
  return a < S(1) ? S(0.5) * d * d : a - S(0.5);
}

template <typename S>
S loss_mse(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("loss: shape mismatch");
  return (pred - target).squaredNorm() / S(pred.size());
}

template <typename S>
S loss_smooth_l1(const Mat<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("loss: shape mismatch");
  return (pred - target).unaryExpr([](S d) { return smooth_l1_term(d); }).sum() / S(pred.size());
}

template <typename S>
S loss(LossKind kind, const Mat<S>& pred, const Mat<S>& target) {
  return kind == LossKind::kMse ? loss_mse(pred, target) : loss_smooth_l1(pred, target);
}

/// d loss / d pred.
template <typename S>
Mat<S> loss_gradient(LossKind kind, const Mat<S>& pred, const Mat<S>& target) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols()) throw ShapeError("loss: shape mismatch");
  const S n = S(pred.size());
  if (kind == LossKind::kMse) return (S(2) / n) * (pred - target);
  return (pred - target).unaryExpr([n](S d) { return (std::abs(d) < S(1) ? d : (d > 0 ? S(1) : S(-1))) / n; });
}

}  // namespace rpil::nn
