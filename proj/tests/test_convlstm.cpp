#include <doctest.h>

#include <cmath>

#include "volscan/convlstm.hpp"
#include "volscan/gradcheck.hpp"
#include "volscan/rng.hpp"

using namespace volscan;

namespace {

// Independent scalar LSTM reference (same gate equations, plain products).
struct ScalarLstm {
  double wxi, wxf, wxg, wxo;
  double whi, whf, whg, who;
  double bi, bf, bg, bo;

  static double sig(double x) { return 1.0 / (1.0 + std::exp(-x)); }

  void step(double x, double& h, double& c) const {
    const double i = sig(wxi * x + whi * h + bi);
    const double f = sig(wxf * x + whf * h + bf);
    const double g = std::tanh(wxg * x + whg * h + bg);
    const double o = sig(wxo * x + who * h + bo);
    c = f * c + i * g;
    h = o * std::tanh(c);
  }
};

// 1x1-effective kernels: only the centre tap of each 3x3 kernel is nonzero.
ConvLstmLayer<double> scalar_cell(const ScalarLstm& ref) {
  ConvLstmLayer<double> cell("cell", 1, 1);
  const double wx[4] = {ref.wxi, ref.wxf, ref.wxg, ref.wxo};
  const double wh[4] = {ref.whi, ref.whf, ref.whg, ref.who};
  const double b[4] = {ref.bi, ref.bf, ref.bg, ref.bo};
  for (int g = 0; g < 4; ++g) {
    cell.wx(g).value.zero();
    cell.wh(g).value.zero();
    cell.wx(g).value[4] = wx[g];
    cell.wh(g).value[4] = wh[g];
    cell.bias(g).value[0] = b[g];
  }
  return cell;
}

}  // namespace

TEST_CASE("zero parameters and zero state give zero next state") {
  ConvLstmLayer<float> cell("cell", 2, 3);
  cell.bias(1).value.zero();  // clear the forget-bias init for the all-zero case
  TensorF x({2, 4, 4}), h({3, 4, 4}), c({3, 4, 4}), hn, cn;
  x.fill(0.7f);
  cell.step(x, h, c, hn, cn);
  for (std::size_t i = 0; i < hn.size(); ++i) {
    CHECK(hn[i] == 0.0f);  // o=0.5, tanh(c')=0
    CHECK(cn[i] == 0.0f);  // i=0.5 (x-conv is zero), g=0
  }
}

TEST_CASE("conv-LSTM at 1x1 spatial matches the scalar LSTM oracle") {
  Rng rng(derive_seed(42, "scalar-oracle"));
  for (int trial = 0; trial < 25; ++trial) {
    ScalarLstm ref{};
    double* fields[12] = {&ref.wxi, &ref.wxf, &ref.wxg, &ref.wxo, &ref.whi, &ref.whf,
                          &ref.whg, &ref.who, &ref.bi,  &ref.bf,  &ref.bg,  &ref.bo};
    for (double* f : fields) *f = rng.uniform(-1.5, 1.5);
    ConvLstmLayer<double> cell = scalar_cell(ref);

    TensorD h({1, 1, 1}), c({1, 1, 1}), hn, cn;
    double h_ref = 0, c_ref = 0;
    for (int t = 0; t < 10; ++t) {
      const double x = rng.uniform(-2, 2);
      TensorD xt({1, 1, 1});
      xt[0] = x;
      cell.step(xt, h, c, hn, cn);
      h = hn;
      c = cn;
      ref.step(x, h_ref, c_ref);
      CHECK(std::abs(h[0] - h_ref) < 1e-6);
      CHECK(std::abs(c[0] - c_ref) < 1e-6);
    }
  }
}

TEST_CASE("saturated output gate silences the hidden state") {
  Rng rng(13);
  ConvLstmLayer<float> cell("cell", 1, 2);
  cell.init(99);
  cell.bias(3).value.fill(-50.0f);  // output gate
  TensorF x({1, 4, 4}), h({2, 4, 4}), c({2, 4, 4}), hn, cn;
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = float(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = float(rng.uniform(-0.5, 0.5));
  cell.step(x, h, c, hn, cn);
  for (std::size_t i = 0; i < hn.size(); ++i) CHECK(std::abs(double(hn[i])) < 1e-20);
}

TEST_CASE("step validates input channels naming the gate kernel") {
  ConvLstmLayer<float> cell("cell", 2, 3);
  TensorF x({5, 4, 4}), h({3, 4, 4}), c({3, 4, 4}), hn, cn;
  try {
    cell.step(x, h, c, hn, cn);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("gate") != std::string::npos);
  }
}

TEST_CASE("sequence: D=1 ascending equals descending") {
  Rng rng(14);
  ConvLstmLayer<float> a("a", 2, 3), d("d", 2, 3);
  a.init(5);
  d.init(5);
  TensorF seq({1, 2, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  const TensorF oa = a.forward(seq, Direction::Ascending, SeqOutput::Full, false);
  const TensorF od = d.forward(seq, Direction::Descending, SeqOutput::Full, false);
  for (std::size_t i = 0; i < oa.size(); ++i) CHECK(oa[i] == od[i]);
}

TEST_CASE("sequence: descending equals ascending on reversed input, re-reversed, exactly") {
  Rng rng(15);
  const std::size_t d = 5, c = 2, hw = 4;
  ConvLstmLayer<float> asc("asc", c, 3), desc("desc", c, 3);
  asc.init(8);
  desc.init(8);
  TensorF seq({d, c, hw, hw});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  TensorF rev = seq;
  const std::size_t stride = c * hw * hw;
  for (std::size_t t = 0; t < d; ++t)
    std::copy(seq.data() + t * stride, seq.data() + (t + 1) * stride,
              rev.data() + (d - 1 - t) * stride);

  const TensorF od = desc.forward(seq, Direction::Descending, SeqOutput::Full, false);
  const TensorF oa = asc.forward(rev, Direction::Ascending, SeqOutput::Full, false);
  for (std::size_t t = 0; t < d; ++t)
    for (std::size_t i = 0; i < 3 * hw * hw; ++i)
      CHECK(od[t * 3 * hw * hw + i] == oa[(d - 1 - t) * 3 * hw * hw + i]);
}

TEST_CASE("sequence: zero parameters give an all-zero hidden sequence") {
  Rng rng(16);
  ConvLstmLayer<float> cell("cell", 2, 2);
  cell.bias(1).value.zero();
  TensorF seq({4, 2, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  const TensorF& out = cell.forward(seq, Direction::Ascending, SeqOutput::Full, false);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(out[i] == 0.0f);
}

TEST_CASE("empty sequence raises an error") {
  ConvLstmLayer<float> cell("cell", 2, 2);
  TensorF seq({0, 2, 4, 4});
  CHECK_THROWS_AS(cell.forward(seq, Direction::Ascending, SeqOutput::Full, false), ValueError);
}

TEST_CASE("causality: output at slice t ignores slices processed later") {
  Rng rng(17);
  const std::size_t d = 6;
  ConvLstmLayer<float> cell("cell", 1, 2);
  cell.init(21);
  TensorF seq({d, 1, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(0, 1));
  const TensorF base = cell.forward(seq, Direction::Ascending, SeqOutput::Full, false);

  TensorF perturbed = seq;
  const std::size_t t_hit = 4;  // perturb slice 4; slices 0..3 must be untouched
  for (std::size_t i = 0; i < 16; ++i) perturbed[t_hit * 16 + i] += 0.5f;
  const TensorF after = cell.forward(perturbed, Direction::Ascending, SeqOutput::Full, false);
  const std::size_t chw = 2 * 16;
  for (std::size_t t = 0; t < t_hit; ++t)
    for (std::size_t i = 0; i < chw; ++i) CHECK(base[t * chw + i] == after[t * chw + i]);
  // ... and the perturbation must actually reach later outputs.
  double diff = 0;
  for (std::size_t i = 0; i < chw; ++i)
    diff += std::abs(double(base[(d - 1) * chw + i]) - double(after[(d - 1) * chw + i]));
  CHECK(diff > 0);
}

TEST_CASE("hidden maps stay within (-1,1) for random inputs and parameters") {
  Rng rng(18);
  ConvLstmLayer<float> cell("cell", 2, 2);
  cell.init(33);
  TensorF seq({8, 2, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-3, 3));
  const TensorF& out = cell.forward(seq, Direction::Ascending, SeqOutput::Full, false);
  for (std::size_t i = 0; i < out.size(); ++i) CHECK(std::abs(double(out[i])) < 1.0);
}

TEST_CASE("BPTT matches finite differences below 1e-6 (64-bit)") {
  for (const auto& oc : run_gradcheck_suite({"convlstm_step", "convlstm_bptt"}, 1e-6)) {
    INFO(oc.name << ": " << oc.detail);
    CHECK(oc.ok);
  }
}

TEST_CASE("zero upstream gradient yields zero parameter gradients") {
  Rng rng(19);
  ConvLstmLayer<float> cell("cell", 2, 2);
  cell.init(55);
  TensorF seq({3, 2, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  cell.forward(seq, Direction::Ascending, SeqOutput::Full, true);
  TensorF up({3, 2, 4, 4});
  const TensorF& d_in = cell.backward(up);
  std::vector<ParamTensorT<float>*> ps;
  cell.collect(ps);
  for (auto* p : ps)
    for (std::size_t i = 0; i < p->size(); ++i) CHECK(p->grad[i] == 0.0f);
  for (std::size_t i = 0; i < d_in.size(); ++i) CHECK(d_in[i] == 0.0f);
}

TEST_CASE("descending gradients equal ascending gradients under slice reversal, exactly") {
  Rng rng(20);
  const std::size_t d = 4, c = 2, f = 2, hw = 4;
  ConvLstmLayer<float> asc("asc", c, f), desc("desc", c, f);
  asc.init(77);
  desc.init(77);
  TensorF seq({d, c, hw, hw}), up({d, f, hw, hw});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  for (std::size_t i = 0; i < up.size(); ++i) up[i] = float(rng.uniform(-1, 1));
  const auto reverse_slices = [](const TensorF& t) {
    TensorF r = t;
    const std::size_t n = t.dim(0), stride = t.size() / n;
    for (std::size_t k = 0; k < n; ++k)
      std::copy(t.data() + k * stride, t.data() + (k + 1) * stride,
                r.data() + (n - 1 - k) * stride);
    return r;
  };

  desc.forward(seq, Direction::Descending, SeqOutput::Full, true);
  const TensorF d_in_desc = desc.backward(up);

  asc.forward(reverse_slices(seq), Direction::Ascending, SeqOutput::Full, true);
  const TensorF d_in_asc = asc.backward(reverse_slices(up));

  std::vector<ParamTensorT<float>*> pd, pa;
  desc.collect(pd);
  asc.collect(pa);
  for (std::size_t k = 0; k < pd.size(); ++k)
    for (std::size_t i = 0; i < pd[k]->size(); ++i) CHECK(pd[k]->grad[i] == pa[k]->grad[i]);
  const TensorF d_in_rev = reverse_slices(d_in_asc);
  for (std::size_t i = 0; i < d_in_desc.size(); ++i) CHECK(d_in_desc[i] == d_in_rev[i]);
}

TEST_CASE("backward without cached forward intermediates is a state error") {
  ConvLstmLayer<float> cell("cell", 2, 2);
  TensorF up({3, 2, 4, 4});
  CHECK_THROWS_AS(cell.backward(up), StateError);

  Rng rng(21);
  TensorF seq({3, 2, 4, 4});
  for (std::size_t i = 0; i < seq.size(); ++i) seq[i] = float(rng.uniform(-1, 1));
  cell.forward(seq, Direction::Ascending, SeqOutput::Full, /*want_cache=*/false);
  CHECK_THROWS_AS(cell.backward(up), StateError);
}
