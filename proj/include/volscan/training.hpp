#pragma once

#include <filesystem>
#include <vector>

#include "volscan/models.hpp"
#include "volscan/tensor.hpp"

namespace volscan {

// Adam with bias correction; defaults beta1=0.9, beta2=0.999, eps=1e-8.
class AdamOptimizer {
 public:
  explicit AdamOptimizer(double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                         double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamTensorF*>& params);

  std::size_t steps_taken() const { return t_; }
  double learning_rate() const { return lr_; }

 private:
  double lr_, beta1_, beta2_, eps_;
  std::size_t t_ = 0;
  std::vector<TensorF> m_, v_;  // moments, indexed like params
};

// Scales all gradients so their global L2 norm is at most max_norm.
double clip_gradients(const std::vector<ParamTensorF*>& params, double max_norm);

struct Sample {
  TensorF volume;
  int label = 0;
};

struct TrainConfig {
  std::size_t max_epochs = 50;
  std::size_t batch_size = 8;
  double learning_rate = 1e-3;
  std::size_t patience = 5;        // epochs without val-AUC improvement
  double improvement_eps = 1e-4;
  double clip_norm = 5.0;          // <= 0 disables clipping
  std::uint64_t seed = 1;          // drives the per-epoch shuffle
  bool log = false;                // per-epoch stderr lines
};

struct EpochStat {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0;
  double val_auc = 0;
  double elapsed_s = 0;  // wall time; the one nondeterministic history field
};

struct TrainResult {
  std::vector<EpochStat> history;
  std::size_t best_epoch = 0;  // 1-based
  double best_val_auc = 0;
};

// Mini-batch BCE training with Adam, seeded shuffling, and early stopping on
// validation AUC. On return the model holds the best-epoch parameters and
// running stats. Gradients accumulate per sample and are averaged per batch.
TrainResult train_model(Model<float>& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& config);

// Eval-mode per-volume probabilities, order-independent.
std::vector<double> evaluate(Model<float>& model, const std::vector<Sample>& samples);

// One optimizer step over `batch` (mean BCE); returns the mean loss.
double train_step(Model<float>& model, const std::vector<const Sample*>& batch,
                  AdamOptimizer& opt, double clip_norm);

// History CSV `epoch,train_loss,val_auc,elapsed_s`.
void write_history_csv(const std::filesystem::path& path, const std::vector<EpochStat>& history);

}  // namespace volscan
