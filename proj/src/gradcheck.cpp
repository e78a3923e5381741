#include "volscan/gradcheck.hpp"

#include <cmath>
#include <limits>

#include "volscan/convlstm.hpp"
#include "volscan/models.hpp"
#include "volscan/ops.hpp"

namespace volscan {

GradCheckResult grad_check(const std::function<double()>& eval,
                           const std::vector<std::pair<std::string, TensorD*>>& tensors,
                           const std::vector<const TensorD*>& analytic,
                           const GradCheckSpec& spec) {
  if (tensors.size() != analytic.size())
    throw InternalError("grad_check: tensors/analytic size mismatch");
  Rng rng(derive_seed(spec.seed, "gradcheck"));
  GradCheckResult res;
  for (std::size_t ti = 0; ti < tensors.size(); ++ti) {
    const auto& [name, tensor] = tensors[ti];
    const TensorD& grad = *analytic[ti];
    if (!tensor->same_shape(grad))
      throw InternalError("grad_check: gradient shape mismatch for " + name);
    const std::size_t n = tensor->size();
    const std::size_t want = std::min(n, spec.samples);
    std::vector<std::size_t> coords;
    if (want == n) {
      coords.resize(n);
      for (std::size_t i = 0; i < n; ++i) coords[i] = i;
    } else {
      coords.reserve(want);
      for (std::size_t i = 0; i < want; ++i) coords.push_back(std::size_t(rng.next_below(n)));
    }
    for (std::size_t i : coords) {
      const double orig = (*tensor)[i];
      (*tensor)[i] = orig + spec.step;
      const double up = eval();
      (*tensor)[i] = orig - spec.step;
      const double down = eval();
      (*tensor)[i] = orig;
      const double numeric = (up - down) / (2.0 * spec.step);
      const double ana = grad[i];
      const std::string coord = name + "[" + std::to_string(i) + "]";
      if (!std::isfinite(numeric) || !std::isfinite(ana))
        throw InternalError("grad_check: non-finite gradient at " + coord + " (analytic=" +
                            std::to_string(ana) + ", numeric=" + std::to_string(numeric) + ")");
      if (std::abs(ana - numeric) <= spec.atol) continue;
      const double rel =
          std::abs(ana - numeric) / std::max({std::abs(ana), std::abs(numeric), 1e-8});
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = coord;
      }
    }
  }
  return res;
}

namespace {

TensorD random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  TensorD t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Sum of upstream-weighted outputs makes a scalar objective for tensor ops.
double weighted_sum(const TensorD& out, const TensorD& upstream) {
  double s = 0;
  for (std::size_t i = 0; i < out.size(); ++i) s += out[i] * upstream[i];
  return s;
}

GradCheckResult check_conv2d() {
  Rng rng(derive_seed(7, "conv2d"));
  TensorD in = random_tensor({2, 3, 6, 6}, rng);
  TensorD w = random_tensor({4, 3, 3, 3}, rng);
  TensorD b = random_tensor({4}, rng);
  TensorD up = random_tensor({2, 4, 6, 6}, rng);
  std::vector<double> col;
  TensorD out, d_in, d_w({4, 3, 3, 3}), d_b({4});
  conv2d_forward(in, w, b, out, col);
  conv2d_backward(in, w, up, &d_in, d_w, d_b, col);
  auto eval = [&]() {
    TensorD o;
    std::vector<double> c;
    conv2d_forward(in, w, b, o, c);
    return weighted_sum(o, up);
  };
  return grad_check(eval, {{"input", &in}, {"kernel", &w}, {"bias", &b}}, {&d_in, &d_w, &d_b});
}

GradCheckResult check_conv3d() {
  Rng rng(derive_seed(7, "conv3d"));
  TensorD in = random_tensor({2, 3, 4, 4}, rng);
  TensorD w = random_tensor({3, 2, 3, 3, 3}, rng);
  TensorD b = random_tensor({3}, rng);
  TensorD up = random_tensor({3, 3, 4, 4}, rng);
  std::vector<double> col;
  TensorD out, d_in, d_w({3, 2, 3, 3, 3}), d_b({3});
  conv3d_forward(in, w, b, out, col);
  conv3d_backward(in, w, up, &d_in, d_w, d_b, col);
  auto eval = [&]() {
    TensorD o;
    std::vector<double> c;
    conv3d_forward(in, w, b, o, c);
    return weighted_sum(o, up);
  };
  return grad_check(eval, {{"input", &in}, {"kernel", &w}, {"bias", &b}}, {&d_in, &d_w, &d_b});
}

GradCheckResult check_maxpool2d() {
  Rng rng(derive_seed(7, "maxpool2d"));
  TensorD in = random_tensor({2, 2, 6, 6}, rng);  // random values: ties have measure zero
  TensorD up = random_tensor({2, 2, 3, 3}, rng);
  TensorD out, d_in;
  std::vector<std::uint32_t> am;
  maxpool2d_forward(in, out, am);
  maxpool2d_backward(up, am, in.shape(), d_in);
  auto eval = [&]() {
    TensorD o;
    std::vector<std::uint32_t> a;
    maxpool2d_forward(in, o, a);
    return weighted_sum(o, up);
  };
  return grad_check(eval, {{"input", &in}}, {&d_in});
}

GradCheckResult check_maxpool3d() {
  Rng rng(derive_seed(7, "maxpool3d"));
  TensorD in = random_tensor({2, 4, 4, 4}, rng);
  TensorD up = random_tensor({2, 2, 2, 2}, rng);
  TensorD out, d_in;
  std::vector<std::uint32_t> am;
  maxpool3d_forward(in, 2, out, am);
  maxpool3d_backward(up, am, in.shape(), d_in);
  auto eval = [&]() {
    TensorD o;
    std::vector<std::uint32_t> a;
    maxpool3d_forward(in, 2, o, a);
    return weighted_sum(o, up);
  };
  return grad_check(eval, {{"input", &in}}, {&d_in});
}

GradCheckResult check_batchnorm() {
  Rng rng(derive_seed(7, "batchnorm"));
  TensorD in = random_tensor({4, 3, 5, 5}, rng);
  TensorD gamma = random_tensor({3}, rng, 0.5, 1.5);
  TensorD beta = random_tensor({3}, rng);
  TensorD up = random_tensor({4, 3, 5, 5}, rng);
  auto eval = [&]() {
    TensorD rm({3}), rv({3}), bt({1}), o;
    BnCache<double> cache;
    batchnorm_forward(in, gamma, beta, 1, Mode::Train, rm, rv, bt, kBnEps, kBnMomentum, o, &cache);
    return weighted_sum(o, up);
  };
  TensorD rm({3}), rv({3}), bt({1}), out, d_in, d_gamma({3}), d_beta({3});
  BnCache<double> cache;
  batchnorm_forward(in, gamma, beta, 1, Mode::Train, rm, rv, bt, kBnEps, kBnMomentum, out, &cache);
  batchnorm_backward(cache, gamma, up, d_gamma, d_beta, d_in);
  return grad_check(eval, {{"input", &in}, {"gamma", &gamma}, {"beta", &beta}},
                    {&d_in, &d_gamma, &d_beta});
}

GradCheckResult check_dense() {
  Rng rng(derive_seed(7, "dense"));
  TensorD in = random_tensor({3, 17}, rng);
  TensorD w = random_tensor({1, 17}, rng);
  TensorD b = random_tensor({1}, rng);
  TensorD up = random_tensor({3}, rng);
  TensorD out, d_in, d_w({1, 17}), d_b({1});
  dense_forward(in, w, b, out);
  dense_backward(in, w, up, &d_in, d_w, d_b);
  auto eval = [&]() {
    TensorD o;
    dense_forward(in, w, b, o);
    return weighted_sum(o, up);
  };
  return grad_check(eval, {{"input", &in}, {"weight", &w}, {"bias", &b}}, {&d_in, &d_w, &d_b});
}

GradCheckResult check_sigmoid() {
  Rng rng(derive_seed(7, "sigmoid"));
  TensorD in = random_tensor({40}, rng, -4, 4);
  TensorD up = random_tensor({40}, rng);
  TensorD out, d_in;
  sigmoid_forward(in, out);
  sigmoid_backward(out, up, d_in);
  auto eval = [&]() {
    TensorD o;
    sigmoid_forward(in, o);
    return weighted_sum(o, up);
  };
  GradCheckSpec spec;
  spec.samples = 40;
  return grad_check(eval, {{"input", &in}}, {&d_in}, spec);
}

GradCheckResult check_tanh() {
  Rng rng(derive_seed(7, "tanh"));
  TensorD in = random_tensor({40}, rng, -4, 4);
  TensorD up = random_tensor({40}, rng);
  TensorD out, d_in;
  tanh_forward(in, out);
  tanh_backward(out, up, d_in);
  auto eval = [&]() {
    TensorD o;
    tanh_forward(in, o);
    return weighted_sum(o, up);
  };
  GradCheckSpec spec;
  spec.samples = 40;
  return grad_check(eval, {{"input", &in}}, {&d_in}, spec);
}

// sigmoid + BCE composed on the logit; analytic gradient is p - y.
GradCheckResult check_bce() {
  Rng rng(derive_seed(7, "bce"));
  TensorD logit = random_tensor({32}, rng, -3, 3);
  TensorD d_logit({32});
  for (std::size_t i = 0; i < 32; ++i) {
    const int y = int(i % 2);
    const double p = sigmoid_scalar(logit[i]);
    d_logit[i] = p - double(y);
  }
  auto eval = [&]() {
    double loss = 0;
    for (std::size_t i = 0; i < 32; ++i)
      loss += bce_loss(sigmoid_scalar(logit[i]), int(i % 2));
    return loss;
  };
  GradCheckSpec spec;
  spec.samples = 32;
  return grad_check(eval, {{"logit", &logit}}, {&d_logit}, spec);
}

GradCheckResult check_convlstm_step() {
  Rng rng(derive_seed(7, "convlstm_step"));
  ConvLstmLayer<double> cell("cell", 2, 3);
  std::vector<ParamTensorT<double>*> ps;
  cell.collect(ps);
  for (auto* p : ps)
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = rng.uniform(-0.5, 0.5);
  TensorD seq = random_tensor({3, 2, 4, 4}, rng);
  TensorD up = random_tensor({3, 3, 4, 4}, rng);

  auto eval = [&]() {
    ConvLstmLayer<double> c2 = cell;
    const TensorD& o = c2.forward(seq, Direction::Ascending, SeqOutput::Full, false);
    return weighted_sum(o, up);
  };
  cell.forward(seq, Direction::Ascending, SeqOutput::Full, true);
  const TensorD& d_in = cell.backward(up);

  std::vector<std::pair<std::string, TensorD*>> tensors{{"input", &seq}};
  std::vector<const TensorD*> analytic{&d_in};
  for (auto* p : ps) {
    tensors.push_back({p->name, &p->value});
    analytic.push_back(&p->grad);
  }
  return grad_check(eval, tensors, analytic);
}

// BPTT over a descending sequence with Last output, the unit-4 configuration.
GradCheckResult check_convlstm_bptt() {
  Rng rng(derive_seed(7, "convlstm_bptt"));
  ConvLstmLayer<double> cell("cell", 2, 2);
  std::vector<ParamTensorT<double>*> ps;
  cell.collect(ps);
  for (auto* p : ps)
    for (std::size_t i = 0; i < p->size(); ++i) p->value[i] = rng.uniform(-0.5, 0.5);
  TensorD seq = random_tensor({4, 2, 4, 4}, rng);
  TensorD up = random_tensor({2, 4, 4}, rng);

  auto eval = [&]() {
    ConvLstmLayer<double> c2 = cell;
    const TensorD& o = c2.forward(seq, Direction::Descending, SeqOutput::Last, false);
    return weighted_sum(o, up);
  };
  cell.forward(seq, Direction::Descending, SeqOutput::Last, true);
  const TensorD& d_in = cell.backward(up);

  std::vector<std::pair<std::string, TensorD*>> tensors{{"input", &seq}};
  std::vector<const TensorD*> analytic{&d_in};
  for (auto* p : ps) {
    tensors.push_back({p->name, &p->value});
    analytic.push_back(&p->grad);
  }
  return grad_check(eval, tensors, analytic);
}

// Full model end-to-end: BCE(model(volume), 1) against every parameter.
GradCheckResult check_model(ModelKind kind, std::size_t d, std::size_t h, std::size_t w,
                            std::size_t samples_per_tensor) {
  Rng rng(derive_seed(7, to_string(kind)));
  ModelConfig cfg{kind, d, h, w, derive_seed(11, to_string(kind))};
  auto model = make_model<double>(cfg);
  // Jitter every parameter so no activation sits exactly on a ReLU kink
  // (zero-init biases/betas put BN outputs at 0 when a stage degenerates to
  // one value per channel, and FD is invalid at kinks).
  for (auto* prm : model->params())
    for (std::size_t i = 0; i < prm->size(); ++i) prm->value[i] += rng.uniform(-0.15, 0.15);
  TensorD vol({d, h, w});
  for (std::size_t i = 0; i < vol.size(); ++i) vol[i] = rng.next_double();
  const int label = 1;

  model->zero_grad();
  const double p = model->forward(vol, Mode::Train);
  model->backward(bce_grad(p, label));

  auto eval = [&]() { return bce_loss(model->forward(vol, Mode::Train), label); };
  std::vector<std::pair<std::string, TensorD*>> tensors;
  std::vector<const TensorD*> analytic;
  for (auto* prm : model->params()) {
    tensors.push_back({prm->name, &prm->value});
    analytic.push_back(&prm->grad);
  }
  GradCheckSpec spec;
  spec.samples = samples_per_tensor;
  return grad_check(eval, tensors, analytic, spec);
}

}  // namespace

std::vector<SuiteCheck> gradcheck_suite() {
  return {
      {"conv2d", check_conv2d},
      {"conv3d", check_conv3d},
      {"maxpool2d", check_maxpool2d},
      {"maxpool3d", check_maxpool3d},
      {"batchnorm", check_batchnorm},
      {"dense", check_dense},
      {"sigmoid", check_sigmoid},
      {"tanh", check_tanh},
      {"bce", check_bce},
      {"convlstm_step", check_convlstm_step},
      {"convlstm_bptt", check_convlstm_bptt},
      {"scanner", [] { return check_model(ModelKind::ConvLstm, 4, 16, 16, 8); }},
      {"mil", [] { return check_model(ModelKind::MilProduct, 4, 16, 16, 8); }},
      {"cnn3d", [] { return check_model(ModelKind::Cnn3d, 8, 16, 16, 8); }},
  };
}

std::vector<SuiteOutcome> run_gradcheck_suite(const std::vector<std::string>& only,
                                              double tolerance) {
  std::vector<SuiteOutcome> outcomes;
  for (auto& check : gradcheck_suite()) {
    if (!only.empty()) {
      bool wanted = false;
      for (const auto& name : only) wanted |= name == check.name;
      if (!wanted) continue;
    }
    SuiteOutcome oc;
    oc.name = check.name;
    try {
      GradCheckResult res = check.run();
      oc.max_rel_err = res.max_rel_err;
      oc.ok = res.max_rel_err < tolerance;
      oc.detail = "max_rel_err=" + std::to_string(res.max_rel_err) +
                  (res.worst.empty() ? "" : " worst=" + res.worst);
    } catch (const std::exception& e) {
      oc.ok = false;
      oc.max_rel_err = std::numeric_limits<double>::infinity();
      oc.detail = e.what();
    }
    outcomes.push_back(std::move(oc));
  }
  if (outcomes.empty()) throw ValueError("gradcheck: no checks matched the requested ops");
  return outcomes;
}

}  // namespace volscan
