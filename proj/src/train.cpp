#include "nulite/train.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

#include "nulite/layers.hpp"

namespace nulite {

void TrainConfig::validate() const {
  if (!(lr0 > 0.0f)) throw std::invalid_argument("TrainConfig: lr0 must be > 0");
  if (momentum < 0.0f || momentum >= 1.0f) {
    throw std::invalid_argument("TrainConfig: momentum must be in [0,1)");
  }
  if (weight_decay < 0.0f) {
    throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
  }
  if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
  if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
  int prev = 0;
  for (int e : lr_drop_epochs) {
    // drops past the final epoch are legal; they simply never fire
    if (e <= prev || e < 1) {
      throw std::invalid_argument(
          "TrainConfig: lr_drop_epochs must be strictly increasing and >= 1");
    }
    prev = e;
  }
  if (!(lr_factor > 0.0f)) {
    throw std::invalid_argument("TrainConfig: lr_factor must be > 0");
  }
}

float lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 1 || epoch > cfg.epochs) {
    throw std::invalid_argument("lr_at_epoch: epoch " + std::to_string(epoch) +
                                " out of [1, " + std::to_string(cfg.epochs) + "]");
  }
  int drops = 0;
  for (int e : cfg.lr_drop_epochs) {
    if (e <= epoch) ++drops;
  }
  float lr = cfg.lr0;
  for (int i = 0; i < drops; ++i) lr *= cfg.lr_factor;
  return lr;
}

void sgd_step(std::vector<ParamRef>& params, const GradBuffers& grads,
              OptimizerState& state, float lr, float momentum,
              float weight_decay) {
  if (grads.size() != params.size()) {
    throw std::invalid_argument("sgd_step: grad buffer count mismatch");
  }
  if (state.velocity.empty()) {
    for (const ParamRef& p : params) {
      state.velocity.emplace_back(static_cast<std::size_t>(p.size), 0.0f);
    }
  }
  if (state.velocity.size() != params.size()) {
    throw std::invalid_argument("sgd_step: velocity buffer count mismatch");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    ParamRef& p = params[i];
    const std::vector<float>& g = grads[i];
    std::vector<float>& v = state.velocity[i];
    if (static_cast<std::int64_t>(g.size()) != p.size ||
        static_cast<std::int64_t>(v.size()) != p.size) {
      throw std::invalid_argument("sgd_step: dim mismatch for '" + p.name + "'");
    }
    const float wd = p.decay ? weight_decay : 0.0f;
    for (std::int64_t j = 0; j < p.size; ++j) {
      v[j] = momentum * v[j] + (g[j] + wd * p.data[j]);
      p.data[j] -= lr * v[j];
    }
  }
}

double top_k_accuracy(const Tensor4& probs, const std::vector<int>& labels,
                      int k) {
  const Dims4 d = probs.dims();
  if (static_cast<int>(labels.size()) != d.n) {
    throw std::invalid_argument("top_k_accuracy: label count mismatch");
  }
  if (k < 1 || k > d.c) {
    throw std::invalid_argument("top_k_accuracy: k out of [1, C]");
  }
  int hits = 0;
  for (int n = 0; n < d.n; ++n) {
    const int label = labels[static_cast<std::size_t>(n)];
    if (label < 0 || label >= d.c) {
      throw std::out_of_range("top_k_accuracy: label out of range");
    }
    const float* row = probs.data() + static_cast<std::int64_t>(n) * d.c;
    const float ref = row[label];
    int rank = 0;
    for (int c = 0; c < d.c; ++c) {
      if (row[c] > ref || (row[c] == ref && c < label)) ++rank;
    }
    if (rank < k) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(d.n);
}

std::string epoch_csv_header() { return "epoch,lr,train_loss,val_top1,val_top5"; }

std::string epoch_csv_row(const EpochRecord& r) {
  char buf[128];
  std::snprintf(buf, sizeof(buf), "%d,%g,%.6f,%.6f,%.6f", r.epoch,
                static_cast<double>(r.lr), r.train_loss, r.top1, r.top5);
  return buf;
}

EvalResult evaluate(Model& model, const Dataset& ds,
                    const std::vector<int>& indices) {
  if (indices.empty()) throw std::invalid_argument("evaluate: empty index set");
  AugmentConfig center;
  center.enabled = false;
  Rng unused(0);

  const int chunk = 16;  // bounds activation memory
  const int top_k = std::min(5, ds.num_classes());
  double top1_hits = 0.0, topk_hits = 0.0, loss_sum = 0.0;
  for (std::size_t start = 0; start < indices.size();
       start += static_cast<std::size_t>(chunk)) {
    const std::size_t end = std::min(indices.size(), start + chunk);
    const std::vector<int> part(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                indices.begin() + static_cast<std::ptrdiff_t>(end));
    std::vector<int> labels;
    for (int idx : part) labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);
    const Tensor4 batch = make_batch(ds, part, center, unused);
    const Tensor4 logit = model.logits(batch, BnMode::eval);
    const SoftmaxLoss sl = softmax_cross_entropy(logit, labels);
    const double n = static_cast<double>(part.size());
    top1_hits += top_k_accuracy(sl.probs, labels, 1) * n;
    topk_hits += top_k_accuracy(sl.probs, labels, top_k) * n;
    loss_sum += sl.loss * n;
  }
  const double total = static_cast<double>(indices.size());
  return {top1_hits / total, topk_hits / total, loss_sum / total};
}

std::vector<EpochRecord> train_model(
    Model& model, const Dataset& ds, const std::vector<int>& train_idx,
    const std::vector<int>& eval_idx, const TrainConfig& cfg,
    const std::function<bool(const EpochRecord&)>& on_epoch) {
  cfg.validate();
  ds.validate();
  if (ds.size() == 0 || train_idx.empty()) {
    throw std::invalid_argument("train_model: empty dataset");
  }
  if (ds.num_classes() != model.graph().num_classes) {
    throw std::invalid_argument("train_model: dataset has " +
                                std::to_string(ds.num_classes()) +
                                " classes, model expects " +
                                std::to_string(model.graph().num_classes));
  }

  Rng root(cfg.seed);
  Rng shuffle_rng = root.fork();
  Rng aug_rng = root.fork();

  std::vector<ParamRef> params = model.learnable_params();
  GradBuffers grads = model.make_grad_buffers();
  OptimizerState opt;

  std::vector<int> order = train_idx;
  std::vector<EpochRecord> records;

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const float lr = lr_at_epoch(cfg, epoch);

    // Fisher-Yates on the seeded stream
    for (std::size_t i = order.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(shuffle_rng.uniform_int(i));
      std::swap(order[i - 1], order[j]);
    }

    double loss_sum = 0.0;
    int batch_no = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.batch_size), ++batch_no) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      const std::vector<int> part(order.begin() + static_cast<std::ptrdiff_t>(start),
                                  order.begin() + static_cast<std::ptrdiff_t>(end));
      std::vector<int> labels;
      for (int idx : part) labels.push_back(ds.labels[static_cast<std::size_t>(idx)]);

      const Tensor4 batch = make_batch(ds, part, cfg.augment, aug_rng);
      Model::Tape tape;
      const Tensor4 logit = model.forward_train(batch, tape);
      const SoftmaxLoss sl = softmax_cross_entropy(logit, labels);
      if (!std::isfinite(sl.loss)) {
        throw NumericError("non-finite loss at epoch " + std::to_string(epoch) +
                           ", batch " + std::to_string(batch_no));
      }
      model.backward(tape, sl.grad_logits, grads);
      sgd_step(params, grads, opt, lr, cfg.momentum, cfg.weight_decay);
      loss_sum += sl.loss * static_cast<double>(part.size());
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = lr;
    rec.train_loss = loss_sum / static_cast<double>(order.size());
    if (!eval_idx.empty()) {
      const EvalResult ev = evaluate(model, ds, eval_idx);
      rec.top1 = ev.top1;
      rec.top5 = ev.top5;
    }
    records.push_back(rec);
    if (on_epoch && !on_epoch(rec)) break;
  }
  return records;
}

std::vector<std::pair<std::vector<int>, std::vector<int>>> kfold_split(
    const Dataset& ds, int folds, std::uint64_t seed) {
  if (folds < 2) throw std::invalid_argument("kfold_split: folds must be >= 2");
  ds.validate();

  std::vector<std::vector<int>> by_class(static_cast<std::size_t>(ds.num_classes()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[ds.labels[i]].push_back(static_cast<int>(i));
  }
  Rng rng(seed);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    std::vector<int>& idx = by_class[c];
    if (static_cast<int>(idx.size()) < folds) {
      throw std::invalid_argument("kfold_split: class '" + ds.class_names[c] +
                                  "' has fewer samples than folds");
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
      std::swap(idx[i - 1], idx[j]);
    }
  }

  std::vector<std::vector<int>> test_sets(static_cast<std::size_t>(folds));
  for (const std::vector<int>& idx : by_class) {
    for (std::size_t i = 0; i < idx.size(); ++i) {
      test_sets[i % static_cast<std::size_t>(folds)].push_back(idx[i]);
    }
  }

  std::vector<std::pair<std::vector<int>, std::vector<int>>> result;
  for (int f = 0; f < folds; ++f) {
    std::vector<char> is_test(ds.size(), 0);
    for (int i : test_sets[static_cast<std::size_t>(f)]) {
      is_test[static_cast<std::size_t>(i)] = 1;
    }
    std::vector<int> train;
    for (std::size_t i = 0; i < ds.size(); ++i) {
      if (!is_test[i]) train.push_back(static_cast<int>(i));
    }
    std::vector<int> test = test_sets[static_cast<std::size_t>(f)];
    std::sort(test.begin(), test.end());
    result.emplace_back(std::move(train), std::move(test));
  }
  return result;
}

}  // namespace nulite
