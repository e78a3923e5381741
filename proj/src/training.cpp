#include "volscan/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>

#include "volscan/metrics.hpp"
#include "volscan/ops.hpp"
#include "volscan/rng.hpp"

namespace volscan {

void AdamOptimizer::step(const std::vector<ParamTensorF*>& params) {
  if (m_.empty()) {
    for (auto* p : params) {
      m_.emplace_back(p->value.shape());
      v_.emplace_back(p->value.shape());
    }
  }
  if (m_.size() != params.size())
    throw InternalError("AdamOptimizer: parameter list changed between steps");
  ++t_;
  const float b1 = float(beta1_), b2 = float(beta2_);
  const float corr1 = 1.0f / (1.0f - std::pow(b1, float(t_)));
  const float corr2 = 1.0f / (1.0f - std::pow(b2, float(t_)));
  const float lr = float(lr_), eps = float(eps_);
  for (std::size_t i = 0; i < params.size(); ++i) {
    float* w = params[i]->value.data();
    const float* g = params[i]->grad.data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = params[i]->size();
    for (std::size_t k = 0; k < n; ++k) {
      m[k] = b1 * m[k] + (1.0f - b1) * g[k];
      v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
      const float mhat = m[k] * corr1;
      const float vhat = v[k] * corr2;
      w[k] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

double clip_gradients(const std::vector<ParamTensorF*>& params, double max_norm) {
  double sq = 0;
  for (auto* p : params)
    for (std::size_t k = 0; k < p->size(); ++k) sq += double(p->grad[k]) * double(p->grad[k]);
  const double norm = std::sqrt(sq);
  if (max_norm > 0 && norm > max_norm) {
    const float scale = float(max_norm / norm);
    for (auto* p : params)
      for (std::size_t k = 0; k < p->size(); ++k) p->grad[k] *= scale;
  }
  return norm;
}

double train_step(Model<float>& model, const std::vector<const Sample*>& batch,
                  AdamOptimizer& opt, double clip_norm) {
  if (batch.empty()) throw ValueError("train_step: empty batch");
  auto params = model.params();
  model.zero_grad();
  double loss_sum = 0;
  for (const Sample* s : batch) {
    const float p = model.forward(s->volume, Mode::Train);
    loss_sum += double(bce_loss(p, s->label));
    model.backward(bce_grad(p, s->label));
  }
  if (!std::isfinite(loss_sum))
    throw InternalError("train_step: non-finite training loss");
  const float inv = 1.0f / float(batch.size());
  for (auto* p : params)
    for (std::size_t k = 0; k < p->size(); ++k) p->grad[k] *= inv;
  clip_gradients(params, clip_norm);
  opt.step(params);
  return loss_sum / double(batch.size());
}

std::vector<double> evaluate(Model<float>& model, const std::vector<Sample>& samples) {
  if (samples.empty()) throw ValueError("evaluate: empty dataset");
  std::vector<double> probs(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i)
    probs[i] = double(model.forward(samples[i].volume, Mode::Eval));
  return probs;
}

namespace {

void require_both_classes(const std::vector<Sample>& set, const char* name) {
  bool pos = false, neg = false;
  for (const auto& s : set) (s.label ? pos : neg) = true;
  if (!pos || !neg)
    throw ValueError(std::string("train: ") + name + " split must contain both classes");
}

struct Snapshot {
  std::vector<TensorF> params, stats;
};

Snapshot take_snapshot(Model<float>& model) {
  Snapshot s;
  for (auto* p : model.params()) s.params.push_back(p->value);
  for (auto& st : model.stats()) s.stats.push_back(*st.tensor);
  return s;
}

void restore_snapshot(Model<float>& model, const Snapshot& s) {
  std::size_t i = 0;
  for (auto* p : model.params()) p->value = s.params[i++];
  i = 0;
  for (auto& st : model.stats()) *st.tensor = s.stats[i++];
}

}  // namespace

TrainResult train_model(Model<float>& model, const std::vector<Sample>& train_set,
                        const std::vector<Sample>& val_set, const TrainConfig& config) {
  if (train_set.empty() || val_set.empty())
    throw ValueError("train: train and val sets must be non-empty");
  require_both_classes(train_set, "train");
  require_both_classes(val_set, "val");
  if (config.patience < 1) throw ValueError("train: patience must be >= 1");
  if (config.batch_size < 1) throw ValueError("train: batch size must be >= 1");

  std::vector<int> val_labels(val_set.size());
  for (std::size_t i = 0; i < val_set.size(); ++i) val_labels[i] = val_set[i].label;

  AdamOptimizer opt(config.learning_rate);
  const std::uint64_t shuffle_seed = derive_seed(config.seed, "shuffle");

  TrainResult result;
  Snapshot best;
  // lr == 0 must be a complete no-op run: BN running stats are pinned to
  // their epoch-1 state so every epoch evaluates identically.
  const bool frozen = config.learning_rate == 0.0;
  Snapshot frozen_stats;
  std::size_t epochs_since_best = 0;
  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  const auto t0 = std::chrono::steady_clock::now();
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    Rng rng(derive_seed(shuffle_seed, epoch));
    rng.shuffle(order);

    double loss_sum = 0;
    std::size_t seen = 0;
    std::vector<const Sample*> batch;
    for (std::size_t i = 0; i < order.size();) {
      batch.clear();
      for (; i < order.size() && batch.size() < config.batch_size; ++i)
        batch.push_back(&train_set[order[i]]);
      loss_sum += train_step(model, batch, opt, config.clip_norm) * double(batch.size());
      seen += batch.size();
    }
    const double train_loss = loss_sum / double(seen);

    if (frozen) {
      if (epoch == 1) {
        frozen_stats = take_snapshot(model);
      } else {
        std::size_t si = 0;
        for (auto& st : model.stats()) *st.tensor = frozen_stats.stats[si++];
      }
    }

    const std::vector<double> val_scores = evaluate(model, val_set);
    const double val_auc = auc(val_scores, val_labels);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    result.history.push_back({epoch, train_loss, val_auc, elapsed});
    if (config.log)
      std::fprintf(stderr, "[train] epoch=%zu train_loss=%.6f val_auc=%.4f elapsed=%.1fs\n",
                   epoch, train_loss, val_auc, elapsed);

    if (result.history.size() == 1 || val_auc > result.best_val_auc + config.improvement_eps) {
      result.best_val_auc = val_auc;
      result.best_epoch = epoch;
      best = take_snapshot(model);
      epochs_since_best = 0;
    } else {
      ++epochs_since_best;
      if (epochs_since_best >= config.patience) break;
    }
  }

  restore_snapshot(model, best);
  return result;
}

void write_history_csv(const std::filesystem::path& path,
                       const std::vector<EpochStat>& history) {
  std::string out = "epoch,train_loss,val_auc,elapsed_s\n";
  for (const auto& e : history)
    out += std::to_string(e.epoch) + "," + format_double(e.train_loss) + "," +
           format_double(e.val_auc) + "," + format_double(e.elapsed_s) + "\n";
  atomic_write_file(path, out);
}

}  // namespace volscan
