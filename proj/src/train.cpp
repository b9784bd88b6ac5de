#include "rpil/nn/train.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <locale>
#include <random>
#include <sstream>

namespace rpil::nn {

void TrainConfig::validate() const {
  if (batch_size < 1) throw std::invalid_argument("train: batch_size must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (max_epochs < 1) throw std::invalid_argument("train: max_epochs must be >= 1");
  if (!(learning_rate > 0)) throw std::invalid_argument("train: learning_rate must be positive");
}

double evaluate_loss(const NetworkSpec& spec, const NetworkParams<float>& params, const std::vector<RunRecord>& runs,
                     LossKind loss_kind, int chunk) {
  const auto refs = index_samples(runs);
  if (refs.empty()) throw std::invalid_argument("evaluate_loss: no samples");
  double total = 0.0;
  for (std::size_t start = 0; start < refs.size(); start += chunk) {
    const std::size_t n = std::min<std::size_t>(chunk, refs.size() - start);
    const auto b = make_batch<float>(runs, std::span(refs).subspan(start, n), spec.input_width);
    const Mat<float> pred = forward_batch<float>(spec, params, b.scans, spec.goal_input ? &b.goals : nullptr, Mode::kEval);
    total += double(loss(loss_kind, pred, b.targets)) * double(n);
  }
  return total / double(refs.size());
}

bool single_goal(const DatasetSplits& splits) {
  std::optional<Pose> first;
  for (const auto* runs : {&splits.train, &splits.validation, &splits.test}) {
    for (const auto& r : *runs) {
      if (r.size() == 0) continue;
      const Pose g = r.goal();
      if (!first) first = g;
      else if (!(g == *first)) return false;
    }
  }
  return true;
}

TrainResult train(const DatasetSplits& splits, const NetworkSpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch, const NetworkParams<float>* initial) {
  cfg.validate();
  spec.validate();
  if (splits.train.empty() || splits.validation.empty()) throw std::invalid_argument("train: empty train or validation split");
  if (spec.input_width != splits.scanner_rays) throw ShapeError("train: network input width differs from scanner rays");

  std::mt19937_64 rng(cfg.seed);
  NetworkParams<float> params = initial ? *initial : init_params<float>(spec, splits.norm, rng);
  AdamState<float> adam(params);
  const AdamConfig adam_cfg = cfg.adam();

  std::vector<SampleRef> order = index_samples(splits.train);
  if (order.empty()) throw std::invalid_argument("train: train split has no samples");

  TrainResult result;
  result.params = params;
  double best = std::numeric_limits<double>::infinity();
  int since_best = 0;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0.0;
    int batch_index = 0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size, ++batch_index) {
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - start);
      const auto b = make_batch<float>(splits.train, std::span(order).subspan(start, n), spec.input_width);
      ForwardCache<float> cache;
      const Mat<float> pred = forward_batch<float>(spec, params, b.scans, spec.goal_input ? &b.goals : nullptr,
                                                   Mode::kTrain, {&rng, nullptr}, &cache);
      const float l = loss(cfg.loss, pred, b.targets);
      if (!std::isfinite(l)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", batch " << batch_index;
        throw NumericError(msg.str());
      }
      epoch_loss += double(l) * double(n);
      const auto grads = backward_batch(spec, params, cache, loss_gradient(cfg.loss, pred, b.targets));
      adam_step(params, grads, adam, adam_cfg);
    }
    if (!params.all_finite()) {
      std::ostringstream msg;
      msg << "train: parameters became non-finite at epoch " << epoch;
      throw NumericError(msg.str());
    }

    EpochStats stats{epoch, epoch_loss / double(order.size()), evaluate_loss(spec, params, splits.validation, cfg.loss)};
    if (!std::isfinite(stats.val_loss)) throw NumericError("train: non-finite validation loss at epoch " + std::to_string(epoch));
    result.history.push_back(stats);

    if (stats.val_loss < best) {
      best = stats.val_loss;
      result.params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    if (on_epoch && !on_epoch(stats, params)) break;
    if (since_best >= cfg.patience) break;
  }
  return result;
}

std::string history_csv(const TrainResult& result) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out.precision(17);
  out << "epoch,train_loss,val_loss,best\n";
  for (const auto& h : result.history)
    out << h.epoch << ',' << h.train_loss << ',' << h.val_loss << ',' << int(h.epoch == result.best_epoch) << '\n';
  return out.str();
}

}  // namespace rpil::nn
