#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "nulite/data.hpp"
#include "nulite/model.hpp"

namespace nulite {

/// Thrown when training diverges (non-finite loss). The CLI maps it to exit
/// code 3.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training hyperparameters; defaults follow the reference recipe (SGD with
/// momentum 0.9, batch 128, lr 0.1, weight decay 5e-4, 100 epochs, lr x0.1 at
/// epochs 26/51/76).
struct TrainConfig {
  float lr0 = 0.1f;
  float momentum = 0.9f;
  float weight_decay = 0.0005f;
  int batch_size = 128;
  int epochs = 100;
  std::vector<int> lr_drop_epochs{26, 51, 76};
  float lr_factor = 0.1f;
  std::uint64_t seed = 0;
  AugmentConfig augment;

  void validate() const;
};

/// lr0 * lr_factor^(number of drop epochs <= epoch). Epochs are 1-based.
float lr_at_epoch(const TrainConfig& cfg, int epoch);

/// Per-parameter velocity buffers, aligned with Model::learnable_params().
struct OptimizerState {
  GradBuffers velocity;
};

/// v <- momentum*v + (grad + weight_decay*param); param <- param - lr*v.
/// Weight decay applies only to tensors flagged for it (conv/linear weights).
void sgd_step(std::vector<ParamRef>& params, const GradBuffers& grads,
              OptimizerState& state, float lr, float momentum,
              float weight_decay);

/// Fraction of rows whose label ranks among the k largest probabilities.
/// Ties are broken toward the lower class index.
double top_k_accuracy(const Tensor4& probs, const std::vector<int>& labels, int k);

struct EpochRecord {
  int epoch = 0;
  float lr = 0.0f;
  double train_loss = 0.0;
  double top1 = 0.0;
  double top5 = 0.0;
};

std::string epoch_csv_header();
std::string epoch_csv_row(const EpochRecord& r);

/// Eval-mode accuracy over the given sample indices (center crop, running-stat
/// batch norm).
struct EvalResult {
  double top1 = 0.0;
  double top5 = 0.0;
  double mean_loss = 0.0;
};
EvalResult evaluate(Model& model, const Dataset& ds,
                    const std::vector<int>& indices);

/// Runs the full training loop on `train_idx`, evaluating each epoch on
/// `eval_idx`. The optional callback sees every EpochRecord; returning false
/// stops training early. Fully deterministic for a fixed cfg.seed.
std::vector<EpochRecord> train_model(
    Model& model, const Dataset& ds, const std::vector<int>& train_idx,
    const std::vector<int>& eval_idx, const TrainConfig& cfg,
    const std::function<bool(const EpochRecord&)>& on_epoch = nullptr);

/// Stratified k-fold partition: per class, indices are shuffled and dealt
/// round-robin into `folds` disjoint test sets covering the data.
std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    const Dataset& ds, int folds, std::uint64_t seed);

}  // namespace nulite
