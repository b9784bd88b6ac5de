#pragma once

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "rpil/dataset.hpp"
#include "rpil/geom.hpp"
#include "rpil/nn/layers.hpp"

namespace rpil::nn {

enum class Variant : std::uint8_t {
  kBaseline = 0,
  kMaxpool = 1,
  kBaselineDropout = 2,
  kMaxpoolDropout = 3,
  kTask2 = 4,
};

std::string to_string(Variant v);
/// Accepts baseline, maxpool, baseline_dropout, maxpool_dropout, task2.
Variant parse_variant(const std::string& name);

struct ConvSpec {
  int in_channels;
  int out_channels;
  int kernel;
  int stride;
  int pad;
};

struct PoolSpec {
  int kernel;
  int stride;
  int pad;
};

using StageSpec = std::variant<ConvSpec, PoolSpec>;

struct DenseSpec {
  int in;
  int out;
  bool relu;
  bool dropout;
};

/// Layer layout of one architecture. Convolutions are followed by ReLU, pools
/// are not; dense layers carry their own flags.
struct NetworkSpec {
  Variant variant = Variant::kBaseline;
  int input_width = 180;
  int input_channels = 4;
  std::vector<StageSpec> stages;
  std::vector<DenseSpec> dense;
  bool goal_input = false;
  double dropout_p = 0.5;

  /// Feature-map width after each stage (entry 0 is the input width).
  std::vector<int> stage_widths() const;
  int flatten_channels() const;
  int flatten_size() const { return flatten_channels() * stage_widths().back(); }
  /// Input size of the first dense layer (flatten plus the goal triple).
  int dense_input_size() const { return flatten_size() + (goal_input ? 3 : 0); }
  bool has_dropout() const;

  /// Throws ShapeError when the stage and dense shapes do not chain.
  void validate() const;

  /// Full-size architecture for a 180-ray scanner.
  static NetworkSpec make(Variant v, int rays = 180);
  /// Same topology on 8 rays with 2-4 channels, for finite-difference checks.
  static NetworkSpec shrunken(Variant v);
};

template <typename S>
struct ConvParams {
  Mat<S> weight;  // out x in*kernel
  Vec<S> bias;
};

template <typename S>
struct DenseParams {
  Mat<S> weight;  // out x in
  Vec<S> bias;
};

/// Trainable arrays plus the frozen input statistics.
template <typename S>
struct NetworkParams {
 private:
  template <typename Self, typename F>
  static void visit_trainable(Self& self, F& f) {
    f("alpha", self.alpha);
    f("beta", self.beta);
    for (std::size_t i = 0; i < self.conv.size(); ++i) {
      f("conv" + std::to_string(i + 1) + ".weight", self.conv[i].weight);
      f("conv" + std::to_string(i + 1) + ".bias", self.conv[i].bias);
    }
    for (std::size_t i = 0; i < self.dense.size(); ++i) {
      f("fc" + std::to_string(i + 1) + ".weight", self.dense[i].weight);
      f("fc" + std::to_string(i + 1) + ".bias", self.dense[i].bias);
    }
  }

 public:
  Vec<S> mean;
  Vec<S> std;
  Vec<S> alpha;
  Vec<S> beta;
  std::vector<ConvParams<S>> conv;
  std::vector<DenseParams<S>> dense;

  /// Visits every trainable array as (name, Eigen dense object).
  template <typename F>
  void for_each_trainable(F&& f) {
    visit_trainable(*this, f);
  }
  template <typename F>
  void for_each_trainable(F&& f) const {
    visit_trainable(*this, f);
  }

  /// Same shapes, all zeros (gradient buffers, Adam moments).
  NetworkParams zeros_like() const {
    NetworkParams z = *this;
    z.for_each_trainable([](const std::string&, auto& a) { a.setZero(); });
    return z;
  }

  template <typename T>
  NetworkParams<T> cast() const {
    NetworkParams<T> out;
    out.mean = mean.template cast<T>();
    out.std = std.template cast<T>();
    out.alpha = alpha.template cast<T>();
    out.beta = beta.template cast<T>();
    for (const auto& c : conv) out.conv.push_back({c.weight.template cast<T>(), c.bias.template cast<T>()});
    for (const auto& d : dense) out.dense.push_back({d.weight.template cast<T>(), d.bias.template cast<T>()});
    return out;
  }

  bool all_finite() const {
    bool ok = mean.allFinite() && std.allFinite();
    for_each_trainable([&](const std::string&, const auto& a) { ok = ok && a.allFinite(); });
    return ok;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for_each_trainable([&](const std::string&, const auto& a) { n += static_cast<std::size_t>(a.size()); });
    return n;
  }

  friend bool operator==(const NetworkParams& a, const NetworkParams& b) {
    if (a.conv.size() != b.conv.size() || a.dense.size() != b.dense.size()) return false;
    auto same = [](const auto& x, const auto& y) {
      return x.rows() == y.rows() && x.cols() == y.cols() && (x.array() == y.array()).all();
    };
    bool ok = same(a.mean, b.mean) && same(a.std, b.std) && same(a.alpha, b.alpha) && same(a.beta, b.beta);
    for (std::size_t i = 0; i < a.conv.size(); ++i)
      ok = ok && same(a.conv[i].weight, b.conv[i].weight) && same(a.conv[i].bias, b.conv[i].bias);
    for (std::size_t i = 0; i < a.dense.size(); ++i)
      ok = ok && same(a.dense[i].weight, b.dense[i].weight) && same(a.dense[i].bias, b.dense[i].bias);
    return ok;
  }
};

/// Kaiming-uniform (fan-in) weights, zero biases, alpha = 1, beta = 0.
template <typename S, typename Rng>
NetworkParams<S> init_params(const NetworkSpec& spec, const NormStats& norm, Rng& rng) {
  spec.validate();
  auto kaiming = [&rng](Eigen::Index rows, Eigen::Index cols) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double bound = std::sqrt(6.0 / static_cast<double>(cols));
    Mat<S> w(rows, cols);
    for (Eigen::Index j = 0; j < cols; ++j)
      for (Eigen::Index i = 0; i < rows; ++i) w(i, j) = S(bound * u(rng));
    return w;
  };

  NetworkParams<S> p;
  const int ch = spec.input_channels;
  p.mean = Vec<S>::Zero(ch);
  p.std = Vec<S>::Ones(ch);
  for (int c = 0; c < std::min(ch, 4); ++c) {
    p.mean[c] = S(norm.mean[c]);
    p.std[c] = S(norm.std[c]);
  }
  p.alpha = Vec<S>::Ones(ch);
  p.beta = Vec<S>::Zero(ch);
  for (const auto& stage : spec.stages) {
    if (const auto* c = std::get_if<ConvSpec>(&stage))
      p.conv.push_back({kaiming(c->out_channels, c->in_channels * c->kernel), Vec<S>::Zero(c->out_channels)});
  }
  for (const auto& d : spec.dense) p.dense.push_back({kaiming(d.out, d.in), Vec<S>::Zero(d.out)});
  return p;
}

/// Intermediate values kept by a forward pass for backpropagation.
template <typename S>
struct ForwardCache {
  int batch = 0;
  Mat<S> standardized;               // y before the learned affine
  std::vector<Mat<S>> stage_inputs;  // input to each stage
  std::vector<Mat<S>> stage_cols;    // im2col of each conv stage (empty for pools)
  std::vector<IndexMat> argmax;      // per pool stage
  std::vector<Mat<S>> stage_outputs; // after ReLU for conv stages
  std::vector<Mat<S>> dense_inputs;
  std::vector<Mat<S>> dense_outputs;  // after ReLU and dropout
  std::vector<Mat<S>> masks;          // dropout masks per dense layer (empty when unused)
};

enum class Mode { kEval, kTrain };

/// Dropout control for a training-mode forward pass: sample fresh masks from
/// `rng`, or reuse `fixed_masks` (one per dense layer, empty where unused).
template <typename S>
struct DropoutSource {
  std::mt19937_64* rng = nullptr;
  const std::vector<Mat<S>>* fixed_masks = nullptr;
};

/// Flattens (C x N*W) into (C*W x N) with feature index c*W + w.
template <typename S>
Mat<S> flatten(const Mat<S>& x, int width) {
  const Eigen::Index batch = x.cols() / width;
  Mat<S> out(x.rows() * width, batch);
  for (Eigen::Index n = 0; n < batch; ++n)
    for (Eigen::Index c = 0; c < x.rows(); ++c)
      out.col(n).segment(c * width, width) = x.row(c).segment(n * width, width).transpose();
  return out;
}

template <typename S>
Mat<S> unflatten(const Mat<S>& flat, Eigen::Index channels, int width) {
  const Eigen::Index batch = flat.cols();
  Mat<S> out(channels, batch * width);
  for (Eigen::Index n = 0; n < batch; ++n)
    for (Eigen::Index c = 0; c < channels; ++c)
      out.row(c).segment(n * width, width) = flat.col(n).segment(c * width, width).transpose();
  return out;
}

/// Batched forward pass. `scans` is (channels x N*W) raw sensor data, `goals`
/// is (3 x N) and required iff spec.goal_input. Returns (2 x N) wheel speeds.
template <typename S>
Mat<S> forward_batch(const NetworkSpec& spec, const NetworkParams<S>& p, const Mat<S>& scans, const Mat<S>* goals,
                     Mode mode, DropoutSource<S> dropout = {}, ForwardCache<S>* cache = nullptr) {
  const int width = spec.input_width;
  if (scans.rows() != spec.input_channels || scans.cols() % width != 0)
    throw ShapeError("forward: scan batch must be channels x (N * width)");
  const auto batch = static_cast<int>(scans.cols() / width);
  if (spec.goal_input && !goals) throw ShapeError("forward: goal input required by this architecture");
  if (!spec.goal_input && goals) throw ShapeError("forward: unexpected goal input");
  if (goals && (goals->rows() != 3 || goals->cols() != batch)) throw ShapeError("forward: goals must be 3 x N");

  ForwardCache<S> local;
  ForwardCache<S>& c = cache ? *cache : local;
  const bool keep = cache != nullptr;
  c = ForwardCache<S>{};
  c.batch = batch;

  Mat<S> x = standardize_affine(scans, p.mean, p.std, p.alpha, p.beta, keep ? &c.standardized : nullptr);
  int w = width;
  std::size_t conv_index = 0;
  for (const auto& stage : spec.stages) {
    if (keep) c.stage_inputs.push_back(x);
    if (const auto* cs = std::get_if<ConvSpec>(&stage)) {
      const auto& cp = p.conv.at(conv_index++);
      if (cp.weight.cols() != x.rows() * cs->kernel) throw ShapeError("forward: conv weight shape mismatch");
      Mat<S> cols = im2col_circular(x, w, cs->kernel, cs->stride, cs->pad);
      Mat<S> out = cp.weight * cols;
      out.colwise() += cp.bias;
      relu_inplace(out);
      if (keep) {
        c.stage_cols.push_back(std::move(cols));
        c.argmax.emplace_back();
      }
      w = window_output_width(w, cs->kernel, cs->stride, cs->pad);
      x = std::move(out);
    } else {
      const auto& ps = std::get<PoolSpec>(stage);
      IndexMat idx;
      Mat<S> out = maxpool1d_circular(x, w, ps.kernel, ps.stride, ps.pad, keep ? &idx : nullptr);
      if (keep) {
        c.stage_cols.emplace_back();
        c.argmax.push_back(std::move(idx));
      }
      w = window_output_width(w, ps.kernel, ps.stride, ps.pad);
      x = std::move(out);
    }
    if (keep) c.stage_outputs.push_back(x);
  }

  Mat<S> h = flatten(x, w);
  if (goals) {
    Mat<S> joined(h.rows() + 3, h.cols());
    joined << h, *goals;
    h = std::move(joined);
  }

  for (std::size_t i = 0; i < spec.dense.size(); ++i) {
    const auto& ds = spec.dense[i];
    const auto& dp = p.dense.at(i);
    if (dp.weight.cols() != h.rows()) throw ShapeError("forward: dense weight shape mismatch");
    if (keep) c.dense_inputs.push_back(h);
    Mat<S> out = dp.weight * h;
    out.colwise() += dp.bias;
    if (ds.relu) relu_inplace(out);
    Mat<S> mask;
    if (ds.dropout && mode == Mode::kTrain) {
      if (dropout.fixed_masks) {
        mask = dropout.fixed_masks->at(i);
      } else if (dropout.rng) {
        mask = dropout_mask<S>(out.rows(), out.cols(), spec.dropout_p, *dropout.rng);
      } else {
        throw std::invalid_argument("forward: training-mode dropout needs an rng or fixed masks");
      }
      if (mask.rows() != out.rows() || mask.cols() != out.cols()) throw ShapeError("forward: dropout mask shape");
      out.array() *= mask.array();
    }
    if (keep) {
      c.masks.push_back(std::move(mask));
      c.dense_outputs.push_back(out);
    }
    h = std::move(out);
  }
  return h;
}

/// Gradients of the loss with respect to every trainable array, given
/// d loss / d output (2 x N) and the cache of the matching forward pass.
template <typename S>
NetworkParams<S> backward_batch(const NetworkSpec& spec, const NetworkParams<S>& p, const ForwardCache<S>& c,
                                const Mat<S>& grad_output) {
  NetworkParams<S> g = p.zeros_like();
  Mat<S> grad = grad_output;

  for (std::size_t i = spec.dense.size(); i-- > 0;) {
    const auto& ds = spec.dense[i];
    if (ds.dropout && c.masks[i].size() > 0) grad.array() *= c.masks[i].array();
    if (ds.relu) relu_backward_inplace(grad, c.dense_outputs[i]);
    g.dense[i].weight = grad * c.dense_inputs[i].transpose();
    g.dense[i].bias = grad.rowwise().sum();
    grad = p.dense[i].weight.transpose() * grad;
  }

  const auto widths = spec.stage_widths();
  const int flat = spec.flatten_size();
  const Mat<S> feature_grad = grad.topRows(flat);
  grad = unflatten(feature_grad, spec.flatten_channels(), widths.back());

  std::size_t conv_index = p.conv.size();
  for (std::size_t s = spec.stages.size(); s-- > 0;) {
    const int w_in = widths[s];
    if (const auto* cs = std::get_if<ConvSpec>(&spec.stages[s])) {
      const auto ci = --conv_index;
      relu_backward_inplace(grad, c.stage_outputs[s]);
      g.conv[ci].weight = grad * c.stage_cols[s].transpose();
      g.conv[ci].bias = grad.rowwise().sum();
      const Mat<S> grad_cols = p.conv[ci].weight.transpose() * grad;
      grad = col2im_circular(grad_cols, c.stage_inputs[s].rows(), w_in, cs->kernel, cs->stride, cs->pad);
    } else {
      grad = maxpool1d_backward(grad, c.argmax[s], c.stage_inputs[s].cols());
    }
  }

  // z = alpha * y + beta
  g.alpha = (grad.array() * c.standardized.array()).rowwise().sum().matrix();
  g.beta = grad.rowwise().sum();
  return g;
}

// --- packing dataset samples ---------------------------------------------

/// Network-ready arrays for a set of samples.
template <typename S>
struct Batch {
  Mat<S> scans;    // 4 x N*W
  Mat<S> goals;    // 3 x N
  Mat<S> targets;  // 2 x N

  int size() const { return static_cast<int>(targets.cols()); }
};

/// Writes record row `row` of `run` into column block `n` of the batch.
template <typename S>
void pack_sample(const RunRecord& run, int row, int n, Batch<S>& b) {
  const RecordLayout l{run.rays()};
  const auto rec = run.records.row(row);
  const int w = l.rays;
  for (int i = 0; i < w; ++i) {
    b.scans(0, n * w + i) = S(rec(i));
    for (int c = 0; c < 3; ++c) b.scans(1 + c, n * w + i) = S(rec(l.color_col() + 3 * i + c));
  }
  for (int k = 0; k < 3; ++k) b.goals(k, n) = S(rec(l.goal_col() + k));
  for (int k = 0; k < 2; ++k) b.targets(k, n) = S(rec(l.target_col() + k));
}

/// Reference to one sample inside a list of runs.
struct SampleRef {
  std::uint32_t run;
  std::uint32_t row;
};

std::vector<SampleRef> index_samples(const std::vector<RunRecord>& runs);

template <typename S>
Batch<S> make_batch(const std::vector<RunRecord>& runs, std::span<const SampleRef> refs, int rays) {
  Batch<S> b;
  const auto n = static_cast<Eigen::Index>(refs.size());
  b.scans.resize(4, n * rays);
  b.goals.resize(3, n);
  b.targets.resize(2, n);
  for (Eigen::Index i = 0; i < n; ++i) pack_sample(runs[refs[i].run], static_cast<int>(refs[i].row), int(i), b);
  return b;
}

/// Channels-first (4 x W) network input for a single scan.
template <typename S>
Mat<S> scan_to_input(const ScanFrame& scan) {
  Mat<S> x(4, scan.rays());
  x.row(0) = scan.distances.transpose().cast<S>();
  x.bottomRows(3) = scan.colors.transpose().cast<S>();
  return x;
}

/// Single-scan evaluation returning unclamped wheel speeds.
template <typename S>
WheelSpeeds forward(const NetworkSpec& spec, const NetworkParams<S>& p, const ScanFrame& scan,
                    const std::optional<Pose>& goal, Mode mode = Mode::kEval, std::mt19937_64* rng = nullptr) {
  if (scan.rays() != spec.input_width) throw ShapeError("forward: scan has the wrong number of rays");
  const Mat<S> x = scan_to_input<S>(scan);
  Mat<S> g;
  if (goal) {
    g.resize(3, 1);
    g << S(goal->x), S(goal->y), S(goal->heading);
  }
  const Mat<S> out = forward_batch<S>(spec, p, x, goal ? &g : nullptr, mode, {rng, nullptr});
  return {double(out(0, 0)), double(out(1, 0))};
}

}  // namespace rpil::nn
