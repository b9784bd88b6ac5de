#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "rpil/dataset.hpp"
#include "rpil/nn/adam.hpp"
#include "rpil/nn/network.hpp"

namespace rpil::nn {

struct TrainConfig {
  double learning_rate = 1e-3;
  int batch_size = 1024;
  int patience = 20;
  int max_epochs = 500;
  LossKind loss = LossKind::kMse;
  std::uint64_t seed = 1;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
  AdamConfig adam() const { return {learning_rate, adam_beta1, adam_beta2, adam_eps}; }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  NetworkParams<float> params;  // snapshot of the best validation epoch
  std::vector<EpochStats> history;
  int best_epoch = 0;
};

class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Called after every epoch with the current (not the best) parameters;
/// return false to stop early.
using EpochCallback = std::function<bool(const EpochStats&, const NetworkParams<float>&)>;

/// Mean loss over every sample of `runs` with dropout disabled.
double evaluate_loss(const NetworkSpec& spec, const NetworkParams<float>& params, const std::vector<RunRecord>& runs,
                     LossKind loss, int chunk = 1024);

/// True when every run shares one goal pose (a fixed-goal dataset).
bool single_goal(const DatasetSplits& splits);

/// Minibatch Adam with per-epoch reshuffling and early stopping on the
/// validation loss. Starts from `initial` when given, else from a seeded init.
TrainResult train(const DatasetSplits& splits, const NetworkSpec& spec, const TrainConfig& cfg,
                  const EpochCallback& on_epoch = {}, const NetworkParams<float>* initial = nullptr);

/// CSV text "epoch,train_loss,val_loss,best" with best = 1 on the selected epoch.
std::string history_csv(const TrainResult& result);

}  // namespace rpil::nn
