#include "rpil/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "rpil/nn/adam.hpp"

namespace rpil::nn {

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

GradCheckReport gradient_check(Variant variant, std::uint64_t seed, LossKind loss_kind, double h) {
  constexpr int kBatch = 3;
  const NetworkSpec spec = NetworkSpec::shrunken(variant);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);

  NetworkParams<double> p = init_params<double>(spec, NormStats{}, rng);
  for (int c = 0; c < spec.input_channels; ++c) {
    p.mean[c] = 0.5 * u(rng);
    p.std[c] = 0.5 + u(rng);
    p.alpha[c] = 0.5 + u(rng);
    p.beta[c] = u(rng) - 0.5;
  }
  // Positive biases keep most ReLUs active so the check covers real gradients.
  for (auto& c : p.conv) c.bias = Vec<double>::NullaryExpr(c.bias.size(), [&] { return 0.05 + 0.2 * u(rng); });
  for (auto& d : p.dense) d.bias = Vec<double>::NullaryExpr(d.bias.size(), [&] { return 0.05 + 0.2 * u(rng); });

  const int w = spec.input_width;
  Mat<double> scans(4, kBatch * w);
  scans.row(0) = Eigen::RowVectorXd::NullaryExpr(kBatch * w, [&] { return 0.1 + 1.7 * u(rng); });
  scans.bottomRows(3) = Mat<double>::NullaryExpr(3, kBatch * w, [&] { return u(rng); });
  const Mat<double> goals = Mat<double>::NullaryExpr(3, kBatch, [&] { return 2.0 * u(rng) - 1.0; });
  // Targets far from the outputs exercise the linear Smooth-L1 branch too.
  const Mat<double> targets = Mat<double>::NullaryExpr(2, kBatch, [&] { return 3.0 * (u(rng) - 0.5); });
  const Mat<double>* goal_ptr = spec.goal_input ? &goals : nullptr;

  // Draw dropout masks until every sample keeps at least one unit per layer.
  ForwardCache<double> cache;
  std::vector<Mat<double>> masks;
  for (int attempt = 0; attempt < 100; ++attempt) {
    forward_batch<double>(spec, p, scans, goal_ptr, Mode::kTrain, {&rng, nullptr}, &cache);
    masks = cache.masks;
    const bool alive = std::all_of(masks.begin(), masks.end(), [](const Mat<double>& m) {
      return m.size() == 0 || (m.array() != 0.0).colwise().any().all();
    });
    if (alive) break;
  }
  const DropoutSource<double> frozen{nullptr, &masks};

  const Mat<double> pred = forward_batch<double>(spec, p, scans, goal_ptr, Mode::kTrain, frozen, &cache);
  const NetworkParams<double> grads = backward_batch(spec, p, cache, loss_gradient(loss_kind, pred, targets));

  auto objective = [&](const NetworkParams<double>& q) {
    return loss(loss_kind, forward_batch<double>(spec, q, scans, goal_ptr, Mode::kTrain, frozen), targets);
  };

  std::vector<std::string> names;
  p.for_each_trainable([&](const std::string& name, const auto&) { names.push_back(name); });

  GradCheckReport report;
  auto views = trainable_views(p);
  const auto analytic = trainable_views(grads);
  for (std::size_t a = 0; a < views.size(); ++a) {
    for (std::size_t i = 0; i < views[a].size(); ++i) {
      double& x = views[a][i];
      const double saved = x;
      x = saved + h;
      const double up = objective(p);
      x = saved - h;
      const double down = objective(p);
      x = saved;
      const double err = relative_error(analytic[a][i], (up - down) / (2.0 * h));
      ++report.checked;
      if (analytic[a][i] != 0.0) ++report.nonzero;
      if (err > report.max_rel_error) {
        report.max_rel_error = err;
        report.worst_array = names[a];
      }
    }
  }
  return report;
}

}  // namespace rpil::nn
