#pragma once

#include <algorithm>
#include <array>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "volscan/convlstm.hpp"
#include "volscan/layers.hpp"
#include "volscan/tensor.hpp"

namespace volscan {

// ------------------------------------------------------------ bag pooling ---

enum class PoolKind { Max, Mean, Product };

inline constexpr double kPoolClamp = 1.0 - 1e-7;

template <typename T>
T pool_max(std::span<const T> p, std::size_t* argmax = nullptr) {
  if (p.empty()) throw ValueError("pool_max: empty bag");
  std::size_t best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[best]) best = i;  // strict: first wins ties
  if (argmax) *argmax = best;
  return p[best];
}

// Mean and product accumulate in sorted order so the result is bitwise
// invariant under any permutation of the bag.
template <typename T>
T pool_mean(std::span<const T> p) {
  if (p.empty()) throw ValueError("pool_mean: empty bag");
  std::vector<T> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  T sum = T(0);
  for (T v : sorted) sum += v;
  return sum / T(p.size());
}

// Noisy-OR: 1 - prod(1 - p_i), p clamped below 1. Computed by direct
// multiplication of complements (largest probability first); this keeps
// max(p) <= result exact under round-to-nearest (every partial product stays
// <= 1-max, and x -> 1-x rounds monotonically), which a log-space
// formulation does not guarantee.
template <typename T>
T pool_product(std::span<const T> p) {
  if (p.empty()) throw ValueError("pool_product: empty bag");
  std::vector<T> q(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) q[i] = T(1) - std::min(p[i], T(kPoolClamp));
  std::sort(q.begin(), q.end());
  T prod = T(1);
  for (T v : q) prod *= v;
  return T(1) - prod;
}

template <typename T>
void pool_backward(PoolKind kind, std::span<const T> p, T d_bag, std::span<T> d_p) {
  switch (kind) {
    case PoolKind::Max: {
      std::size_t best;
      pool_max(p, &best);
      for (auto& g : d_p) g = T(0);
      d_p[best] = d_bag;
      return;
    }
    case PoolKind::Mean: {
      const T g = d_bag / T(p.size());
      for (auto& v : d_p) v = g;
      return;
    }
    case PoolKind::Product: {
      // d/dp_i = prod_{j != i} (1 - p_j), via exact prefix/suffix products.
      const std::size_t n = p.size();
      std::vector<T> q(n);
      for (std::size_t i = 0; i < n; ++i) q[i] = T(1) - std::min(p[i], T(kPoolClamp));
      std::vector<T> suffix(n + 1, T(1));
      for (std::size_t i = n; i-- > 0;) suffix[i] = suffix[i + 1] * q[i];
      T prefix = T(1);
      for (std::size_t i = 0; i < n; ++i) {
        d_p[i] = p[i] >= T(kPoolClamp) ? T(0) : d_bag * prefix * suffix[i + 1];
        prefix *= q[i];
      }
      return;
    }
  }
}

// ----------------------------------------------------------- model plumbing ---

enum class ModelKind { ConvLstm, MilMax, MilMean, MilProduct, Cnn3d };

inline const char* to_string(ModelKind k) {
  switch (k) {
    case ModelKind::ConvLstm: return "convlstm";
    case ModelKind::MilMax: return "mil-max";
    case ModelKind::MilMean: return "mil-mean";
    case ModelKind::MilProduct: return "mil-product";
    case ModelKind::Cnn3d: return "cnn3d";
  }
  return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
  for (ModelKind k : {ModelKind::ConvLstm, ModelKind::MilMax, ModelKind::MilMean,
                      ModelKind::MilProduct, ModelKind::Cnn3d})
    if (s == to_string(k)) return k;
  throw ValueError("unknown model kind '" + s +
                   "' (expected convlstm|mil-max|mil-mean|mil-product|cnn3d)");
}

// Base width as published per architecture; unit widths follow the doubling
// schedule [w, w, 2w, 2w].
inline std::size_t base_filters(ModelKind k) {
  switch (k) {
    case ModelKind::ConvLstm: return 32;
    case ModelKind::Cnn3d: return 36;
    default: return 64;
  }
}

// Table-1-style presentation order.
inline constexpr std::array<ModelKind, 5> kCompareOrder = {
    ModelKind::MilMax, ModelKind::MilMean, ModelKind::MilProduct, ModelKind::Cnn3d,
    ModelKind::ConvLstm};

struct ModelConfig {
  ModelKind kind = ModelKind::ConvLstm;
  std::size_t depth = 0, height = 0, width = 0;
  std::uint64_t init_seed = 0;
};

template <typename T>
struct StatEntry {
  std::string name;
  TensorT<T>* tensor;
};

template <typename T>
class Model {
 public:
  virtual ~Model() = default;

  const ModelConfig& config() const { return config_; }
  ModelKind kind() const { return config_.kind; }

  // volume is [D,H,W] with values in [0,1]; returns P(lesion) in (0,1).
  virtual T forward(const TensorT<T>& volume, Mode mode) = 0;
  // d_prob is dLoss/dP; gradients accumulate into param grads.
  virtual void backward(T d_prob) = 0;

  virtual std::vector<ParamTensorT<T>*> params() = 0;
  virtual std::vector<StatEntry<T>> stats() = 0;

  // Per-slice probabilities from the latest forward (MIL models only).
  virtual const std::vector<T>* slice_probs() const { return nullptr; }

  void zero_grad() {
    for (auto* p : params()) p->grad.zero();
  }

  std::size_t parameter_count() {
    std::size_t n = 0;
    for (auto* p : params()) n += p->size();
    return n;
  }

 protected:
  explicit Model(ModelConfig cfg) : config_(cfg) {}

  void validate_spatial() const {
    if (config_.height % 16 || config_.width % 16 || config_.height == 0 || config_.width == 0)
      throw ValueError(std::string("model ") + to_string(config_.kind) +
                       ": H and W must be positive multiples of 16 (four 2x2 pools), got " +
                       std::to_string(config_.height) + "x" + std::to_string(config_.width));
    if (config_.depth == 0) throw ValueError("model: depth must be >= 1");
  }

  void check_volume(const TensorT<T>& v) const {
    if (v.shape() != Shape({config_.depth, config_.height, config_.width}))
      throw ShapeError(std::string("model ") + to_string(config_.kind) + ": volume shape " +
                       shape_str(v.shape()) + " does not match configured input " +
                       shape_str({config_.depth, config_.height, config_.width}));
  }

  // dLogit = dP * sigmoid'(logit), from the cached probability. The clamp
  // keeps the derivative nonzero when the float sigmoid saturates to 0 or 1.
  static T chain_sigmoid(T prob, T d_prob) {
    const T pc = clamp_prob(prob);
    return d_prob * pc * (T(1) - pc);
  }

  ModelConfig config_;
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg);

template <typename T>
std::size_t count_parameters(Model<T>& m) {
  return m.parameter_count();
}

// ------------------------------------------------------------- slice trunk ---

// conv3x3 -> BN -> ReLU -> conv3x3 -> BN -> ReLU -> maxpool, applied to every
// slice of a [D,C,H,W] stack (slices ride the leading batch axis).
template <typename T>
struct SliceTrunk {
  Conv2dLayer<T> conv_a, conv_b;
  BatchNormLayer<T> bn_a, bn_b;
  ReluLayer<T> relu_a, relu_b;
  MaxPool2dLayer<T> pool;

  SliceTrunk(const std::string& prefix, std::size_t c_in, std::size_t filters)
      : conv_a(prefix + ".conv_a", c_in, filters),
        conv_b(prefix + ".conv_b", filters, filters),
        bn_a(prefix + ".bn_a", filters, /*channel_axis=*/1),
        bn_b(prefix + ".bn_b", filters, /*channel_axis=*/1) {}

  void init(std::uint64_t seed) {
    conv_a.init(derive_seed(seed, conv_a.w.name));
    conv_b.init(derive_seed(seed, conv_b.w.name));
  }

  TensorT<T>& forward(const TensorT<T>& x, Mode mode) {
    auto& a = relu_a.forward(bn_a.forward(conv_a.forward(x), mode));
    auto& b = relu_b.forward(bn_b.forward(conv_b.forward(a), mode));
    return pool.forward(b);
  }

  TensorT<T>& backward(const TensorT<T>& d_out, bool need_dx) {
    auto& d1 = conv_b.backward(bn_b.backward(relu_b.backward(pool.backward(d_out))));
    return conv_a.backward(bn_a.backward(relu_a.backward(d1)), need_dx);
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    conv_a.collect(ps);
    bn_a.collect(ps);
    conv_b.collect(ps);
    bn_b.collect(ps);
  }

  void collect_stats(std::vector<StatEntry<T>>& st) {
    for (BatchNormLayer<T>* bn : {&bn_a, &bn_b}) {
      st.push_back({bn->name + ".running_mean", &bn->running_mean});
      st.push_back({bn->name + ".running_var", &bn->running_var});
      st.push_back({bn->name + ".batches", &bn->batches});
    }
  }
};

// --------------------------------------------------------------- scanner ----

// Four units of slice-wise convs + a directional conv-LSTM, alternating
// ascending/descending. Units 1-3 pass full hidden sequences on; unit 4
// emits its last hidden state, which a dense+sigmoid head scores.
template <typename T>
class ScannerModel : public Model<T> {
 public:
  explicit ScannerModel(ModelConfig cfg) : Model<T>(cfg) {
    this->validate_spatial();
    const std::size_t base = base_filters(ModelKind::ConvLstm);
    const std::size_t widths[4] = {base, base, 2 * base, 2 * base};
    std::size_t c_in = 1;
    for (int u = 0; u < 4; ++u) {
      const std::string prefix = "u" + std::to_string(u + 1);
      trunks_.emplace_back(prefix, c_in, widths[u]);
      lstms_.emplace_back(prefix + ".lstm", widths[u], widths[u]);
      c_in = widths[u];
    }
    const std::size_t hf = cfg.height / 16, wf = cfg.width / 16;
    head_ = std::make_unique<DenseLayer<T>>("head", widths[3] * hf * wf);
    for (auto& t : trunks_) t.init(cfg.init_seed);
    for (auto& l : lstms_) l.init(derive_seed(cfg.init_seed, l.wx(0).name));
    head_->init(derive_seed(cfg.init_seed, head_->w.name));
  }

  T forward(const TensorT<T>& volume, Mode mode) override {
    this->check_volume(volume);
    input_ = volume.reshaped({this->config_.depth, 1, this->config_.height, this->config_.width});
    const bool cache = mode == Mode::Train;
    const TensorT<T>* x = &input_;
    for (int u = 0; u < 4; ++u) {
      auto& pooled = trunks_[u].forward(*x, mode);
      x = &lstms_[u].forward(pooled, direction(u), u < 3 ? SeqOutput::Full : SeqOutput::Last,
                             cache);
    }
    last_state_shape_ = x->shape();
    feat_ = x->reshaped({1, x->size()});
    const T logit = head_->forward(feat_)[0];
    prob_ = clamp_prob(sigmoid_scalar(logit));
    return prob_;
  }

  void backward(T d_prob) override {
    TensorT<T> d_logit({1});
    d_logit[0] = this->chain_sigmoid(prob_, d_prob);
    TensorT<T> d_feat = head_->backward(d_logit);
    d_feat.reshape(last_state_shape_);
    const TensorT<T>* dy = &d_feat;
    for (int u = 3; u >= 0; --u) {
      auto& d_seq = lstms_[u].backward(*dy);
      dy = &trunks_[u].backward(d_seq, /*need_dx=*/u > 0);
    }
  }

  std::vector<ParamTensorT<T>*> params() override {
    std::vector<ParamTensorT<T>*> ps;
    for (int u = 0; u < 4; ++u) {
      trunks_[u].collect(ps);
      lstms_[u].collect(ps);
    }
    head_->collect(ps);
    return ps;
  }

  std::vector<StatEntry<T>> stats() override {
    std::vector<StatEntry<T>> st;
    for (auto& t : trunks_) t.collect_stats(st);
    return st;
  }

  static Direction direction(int unit) {
    return unit % 2 == 0 ? Direction::Ascending : Direction::Descending;
  }

 private:
  std::vector<SliceTrunk<T>> trunks_;
  std::vector<ConvLstmLayer<T>> lstms_;
  std::unique_ptr<DenseLayer<T>> head_;
  TensorT<T> input_, feat_;
  Shape last_state_shape_;
  T prob_ = T(0);
};

// ------------------------------------------------------------------- MIL ----

// Same trunk with the conv-LSTM swapped for one more slice-wise conv+BN+ReLU;
// a shared dense+sigmoid head scores each slice, then the bag pooling
// collapses slice probabilities into the volume probability.
template <typename T>
class MilModel : public Model<T> {
 public:
  explicit MilModel(ModelConfig cfg) : Model<T>(cfg) {
    this->validate_spatial();
    switch (cfg.kind) {
      case ModelKind::MilMax: pool_kind_ = PoolKind::Max; break;
      case ModelKind::MilMean: pool_kind_ = PoolKind::Mean; break;
      case ModelKind::MilProduct: pool_kind_ = PoolKind::Product; break;
      default: throw ValueError("MilModel: not a MIL model kind");
    }
    const std::size_t base = base_filters(cfg.kind);
    const std::size_t widths[4] = {base, base, 2 * base, 2 * base};
    std::size_t c_in = 1;
    for (int u = 0; u < 4; ++u) {
      const std::string prefix = "u" + std::to_string(u + 1);
      trunks_.emplace_back(prefix, c_in, widths[u]);
      conv_r_.emplace_back(prefix + ".conv_r", widths[u], widths[u]);
      bn_r_.emplace_back(prefix + ".bn_r", widths[u], /*channel_axis=*/1);
      c_in = widths[u];
    }
    relu_r_.resize(4);
    const std::size_t hf = cfg.height / 16, wf = cfg.width / 16;
    feat_per_slice_ = widths[3] * hf * wf;
    head_ = std::make_unique<DenseLayer<T>>("head", feat_per_slice_);
    for (auto& t : trunks_) t.init(cfg.init_seed);
    for (auto& c : conv_r_) c.init(derive_seed(cfg.init_seed, c.w.name));
    head_->init(derive_seed(cfg.init_seed, head_->w.name));
    // Noisy-OR over D slices saturates near 1 when every slice starts at 0.5,
    // which stalls training on negatives; start slice probabilities at ~1/D.
    if (pool_kind_ == PoolKind::Product)
      head_->b.value[0] = T(-std::log(double(std::max<std::size_t>(cfg.depth, 2)) - 1.0));
  }

  T forward(const TensorT<T>& volume, Mode mode) override {
    this->check_volume(volume);
    const std::size_t d = this->config_.depth;
    input_ = volume.reshaped({d, 1, this->config_.height, this->config_.width});
    const TensorT<T>* x = &input_;
    for (int u = 0; u < 4; ++u) {
      auto& pooled = trunks_[u].forward(*x, mode);
      x = &relu_r_[u].forward(bn_r_[u].forward(conv_r_[u].forward(pooled), mode));
    }
    feat_ = x->reshaped({d, feat_per_slice_});
    logits_ = head_->forward(feat_);
    slice_probs_.resize(d);
    for (std::size_t i = 0; i < d; ++i) slice_probs_[i] = clamp_prob(sigmoid_scalar(logits_[i]));
    bag_prob_ = apply_pool(pool_kind_, std::span<const T>(slice_probs_));
    return bag_prob_;
  }

  void backward(T d_prob) override {
    const std::size_t d = this->config_.depth;
    std::vector<T> d_slice(d);
    pool_backward(pool_kind_, std::span<const T>(slice_probs_), d_prob, std::span<T>(d_slice));
    TensorT<T> d_logits({d});
    for (std::size_t i = 0; i < d; ++i)
      d_logits[i] = this->chain_sigmoid(slice_probs_[i], d_slice[i]);
    TensorT<T> d_feat = head_->backward(d_logits);
    d_feat.reshape(relu_r_[3].out.shape());
    const TensorT<T>* dy = &d_feat;
    for (int u = 3; u >= 0; --u) {
      auto& d1 = conv_r_[u].backward(bn_r_[u].backward(relu_r_[u].backward(*dy)));
      dy = &trunks_[u].backward(d1, /*need_dx=*/u > 0);
    }
  }

  const std::vector<T>* slice_probs() const override { return &slice_probs_; }

  std::vector<ParamTensorT<T>*> params() override {
    std::vector<ParamTensorT<T>*> ps;
    for (int u = 0; u < 4; ++u) {
      trunks_[u].collect(ps);
      conv_r_[u].collect(ps);
      bn_r_[u].collect(ps);
    }
    head_->collect(ps);
    return ps;
  }

  std::vector<StatEntry<T>> stats() override {
    std::vector<StatEntry<T>> st;
    for (int u = 0; u < 4; ++u) {
      trunks_[u].collect_stats(st);
      st.push_back({bn_r_[u].name + ".running_mean", &bn_r_[u].running_mean});
      st.push_back({bn_r_[u].name + ".running_var", &bn_r_[u].running_var});
      st.push_back({bn_r_[u].name + ".batches", &bn_r_[u].batches});
    }
    return st;
  }

  static T apply_pool(PoolKind k, std::span<const T> p) {
    switch (k) {
      case PoolKind::Max: return pool_max(p);
      case PoolKind::Mean: return pool_mean(p);
      case PoolKind::Product: return pool_product(p);
    }
    return T(0);
  }

 private:
  PoolKind pool_kind_;
  std::vector<SliceTrunk<T>> trunks_;
  std::vector<Conv2dLayer<T>> conv_r_;
  std::vector<BatchNormLayer<T>> bn_r_;
  std::vector<ReluLayer<T>> relu_r_;
  std::unique_ptr<DenseLayer<T>> head_;
  std::size_t feat_per_slice_ = 0;
  TensorT<T> input_, feat_, logits_;
  std::vector<T> slice_probs_;
  T bag_prob_ = T(0);
};

// ----------------------------------------------------------------- 3D CNN ---

// Volumetric mirror of the MIL trunk: four blocks of two conv3d+BN+ReLU, a
// (depth,2,2) pool (spatial-only in block 4), and a third conv3d+BN+ReLU.
// The final conv layer is unpooled; its flattened output feeds the dense head.
template <typename T>
class Cnn3dModel : public Model<T> {
 public:
  explicit Cnn3dModel(ModelConfig cfg) : Model<T>(cfg) {
    this->validate_spatial();
    const std::size_t base = base_filters(ModelKind::Cnn3d);
    const std::size_t widths[4] = {base, base, 2 * base, 2 * base};
    std::size_t c_in = 1, d = cfg.depth;
    for (int blk = 0; blk < 4; ++blk) {
      const std::string prefix = "b" + std::to_string(blk + 1);
      conv_a_.emplace_back(prefix + ".conv_a", c_in, widths[blk]);
      bn_a_.emplace_back(prefix + ".bn_a", widths[blk], /*channel_axis=*/0);
      conv_b_.emplace_back(prefix + ".conv_b", widths[blk], widths[blk]);
      bn_b_.emplace_back(prefix + ".bn_b", widths[blk], /*channel_axis=*/0);
      const std::size_t pd = blk < 3 ? 2 : 1;
      pools_.emplace_back(pd);
      conv_r_.emplace_back(prefix + ".conv_r", widths[blk], widths[blk]);
      bn_r_.emplace_back(prefix + ".bn_r", widths[blk], /*channel_axis=*/0);
      c_in = widths[blk];
      if (pd == 2 && d >= 2) d /= 2;
    }
    relu_a_.resize(4);
    relu_b_.resize(4);
    relu_r_.resize(4);
    const std::size_t hf = cfg.height / 16, wf = cfg.width / 16;
    head_ = std::make_unique<DenseLayer<T>>("head", widths[3] * d * hf * wf);
    for (auto& c : conv_a_) c.init(derive_seed(cfg.init_seed, c.w.name));
    for (auto& c : conv_b_) c.init(derive_seed(cfg.init_seed, c.w.name));
    for (auto& c : conv_r_) c.init(derive_seed(cfg.init_seed, c.w.name));
    head_->init(derive_seed(cfg.init_seed, head_->w.name));
  }

  T forward(const TensorT<T>& volume, Mode mode) override {
    this->check_volume(volume);
    input_ = volume.reshaped({1, this->config_.depth, this->config_.height, this->config_.width});
    const TensorT<T>* x = &input_;
    for (int blk = 0; blk < 4; ++blk) {
      auto& a = relu_a_[blk].forward(bn_a_[blk].forward(conv_a_[blk].forward(*x), mode));
      auto& b = relu_b_[blk].forward(bn_b_[blk].forward(conv_b_[blk].forward(a), mode));
      auto& p = pools_[blk].forward(b);
      x = &relu_r_[blk].forward(bn_r_[blk].forward(conv_r_[blk].forward(p), mode));
    }
    feat_ = x->reshaped({1, x->size()});
    const T logit = head_->forward(feat_)[0];
    prob_ = clamp_prob(sigmoid_scalar(logit));
    return prob_;
  }

  void backward(T d_prob) override {
    TensorT<T> d_logit({1});
    d_logit[0] = this->chain_sigmoid(prob_, d_prob);
    TensorT<T> d_feat = head_->backward(d_logit);
    d_feat.reshape(relu_r_[3].out.shape());
    const TensorT<T>* dy = &d_feat;
    for (int blk = 3; blk >= 0; --blk) {
      auto& dp = conv_r_[blk].backward(bn_r_[blk].backward(relu_r_[blk].backward(*dy)));
      auto& db = pools_[blk].backward(dp);
      auto& da = conv_b_[blk].backward(bn_b_[blk].backward(relu_b_[blk].backward(db)));
      dy = &conv_a_[blk].backward(bn_a_[blk].backward(relu_a_[blk].backward(da)),
                                  /*need_dx=*/blk > 0);
    }
  }

  std::vector<ParamTensorT<T>*> params() override {
    std::vector<ParamTensorT<T>*> ps;
    for (int blk = 0; blk < 4; ++blk) {
      conv_a_[blk].collect(ps);
      bn_a_[blk].collect(ps);
      conv_b_[blk].collect(ps);
      bn_b_[blk].collect(ps);
      conv_r_[blk].collect(ps);
      bn_r_[blk].collect(ps);
    }
    head_->collect(ps);
    return ps;
  }

  std::vector<StatEntry<T>> stats() override {
    std::vector<StatEntry<T>> st;
    for (int blk = 0; blk < 4; ++blk) {
      for (BatchNormLayer<T>* bn : {&bn_a_[blk], &bn_b_[blk], &bn_r_[blk]}) {
        st.push_back({bn->name + ".running_mean", &bn->running_mean});
        st.push_back({bn->name + ".running_var", &bn->running_var});
        st.push_back({bn->name + ".batches", &bn->batches});
      }
    }
    return st;
  }

 private:
  std::vector<Conv3dLayer<T>> conv_a_, conv_b_, conv_r_;
  std::vector<BatchNormLayer<T>> bn_a_, bn_b_, bn_r_;
  std::vector<ReluLayer<T>> relu_a_, relu_b_, relu_r_;
  std::vector<MaxPool3dLayer<T>> pools_;
  std::unique_ptr<DenseLayer<T>> head_;
  TensorT<T> input_, feat_;
  T prob_ = T(0);
};

template <typename T>
std::unique_ptr<Model<T>> make_model(const ModelConfig& cfg) {
  switch (cfg.kind) {
    case ModelKind::ConvLstm: return std::make_unique<ScannerModel<T>>(cfg);
    case ModelKind::MilMax:
    case ModelKind::MilMean:
    case ModelKind::MilProduct: return std::make_unique<MilModel<T>>(cfg);
    case ModelKind::Cnn3d: return std::make_unique<Cnn3dModel<T>>(cfg);
  }
  throw ValueError("make_model: unknown model kind");
}

}  // namespace volscan
