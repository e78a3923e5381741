#pragma once

#include <string>
#include <vector>

#include "volscan/layers.hpp"
#include "volscan/ops.hpp"
#include "volscan/tensor.hpp"

namespace volscan {

enum class Direction { Ascending, Descending };
enum class SeqOutput { Full, Last };

inline const char* to_string(Direction d) {
  return d == Direction::Ascending ? "ascending" : "descending";
}

// Convolutional LSTM over a slice sequence. Gates (order i, f, g, o):
//   i = sig(Wxi*x + Whi*h + bi)      f = sig(Wxf*x + Whf*h + bf)
//   g = tanh(Wxg*x + Whg*h + bg)     o = sig(Wxo*x + Who*h + bo)
//   c' = f.c + i.g                   h' = o.tanh(c')
// with * a same-padded 3x3 convolution. No peephole terms. The four gates are
// packed into one [4*Cout, ...] kernel matrix per weight set so each step runs
// two GEMMs instead of eight.
template <typename T>
class ConvLstmLayer {
 public:
  ConvLstmLayer(const std::string& name, std::size_t c_in, std::size_t c_out)
      : name_(name), cin_(c_in), cout_(c_out) {
    static constexpr const char* kGate[4] = {"i", "f", "g", "o"};
    for (int g = 0; g < 4; ++g) {
      wx_[g] = ParamTensorT<T>(name + ".wx_" + kGate[g], {c_out, c_in, 3, 3});
      wh_[g] = ParamTensorT<T>(name + ".wh_" + kGate[g], {c_out, c_out, 3, 3});
      b_[g] = ParamTensorT<T>(name + ".b_" + kGate[g], {c_out});
    }
    // Forget-gate bias starts at 1 so early memory is retained.
    b_[1].value.fill(T(1));
  }

  void init(std::uint64_t seed) {
    for (int g = 0; g < 4; ++g) {
      init_uniform_fan_in(wx_[g].value, cin_ * 9, derive_seed(seed, std::uint64_t(g)));
      init_uniform_fan_in(wh_[g].value, cout_ * 9, derive_seed(seed, std::uint64_t(g + 4)));
    }
  }

  void collect(std::vector<ParamTensorT<T>*>& ps) {
    for (int g = 0; g < 4; ++g) ps.push_back(&wx_[g]);
    for (int g = 0; g < 4; ++g) ps.push_back(&wh_[g]);
    for (int g = 0; g < 4; ++g) ps.push_back(&b_[g]);
  }

  std::size_t c_in() const { return cin_; }
  std::size_t c_out() const { return cout_; }
  ParamTensorT<T>& wx(int gate) { return wx_[gate]; }
  ParamTensorT<T>& wh(int gate) { return wh_[gate]; }
  ParamTensorT<T>& bias(int gate) { return b_[gate]; }

  // One cell update with explicit state; h/c share shape [Cout,H,W].
  void step(const TensorT<T>& x, const TensorT<T>& h_prev, const TensorT<T>& c_prev,
            TensorT<T>& h_next, TensorT<T>& c_next) {
    validate_input(x);
    require(h_prev.shape() == Shape({cout_, x.dim(1), x.dim(2)}) && h_prev.same_shape(c_prev),
            name_ + ": state shape " + shape_str(h_prev.shape()) + " does not match input " +
                shape_str(x.shape()));
    pack_weights();
    const std::size_t hw = x.dim(1) * x.dim(2);
    std::vector<T> xcol(cin_ * 9 * hw), hcol(cout_ * 9 * hw);
    TensorT<T> z({4 * cout_, x.dim(1), x.dim(2)});
    TensorT<T> gates[4];
    step_forward(x.data(), h_prev.data(), c_prev.data(), x.dim(1), x.dim(2), xcol.data(),
                 hcol.data(), z, gates, /*skip_h=*/false, h_next, c_next, nullptr);
  }

  // Full sequence pass; seq [D,Cin,H,W]. Full mode returns [D,Cout,H,W] with
  // output slot t holding the hidden map produced when slice t was processed
  // (so slot order matches input order for either direction); Last mode
  // returns the final hidden state [Cout,H,W].
  TensorT<T>& forward(const TensorT<T>& seq, Direction dir, SeqOutput mode, bool want_cache) {
    require(seq.rank() == 4, name_ + ": sequence must be [D,C,H,W]");
    const std::size_t d = seq.dim(0);
    if (d == 0) throw ValueError(name_ + ": empty slice sequence");
    validate_input_seq(seq);
    const std::size_t h = seq.dim(2), w = seq.dim(3), hw = h * w;

    pack_weights();
    dir_ = dir;
    out_mode_ = mode;
    in_shape_ = seq.shape();
    have_cache_ = want_cache;
    steps_.resize(want_cache ? d : 1);
    out_seq_.resize({d, cout_, h, w});

    TensorT<T> h_state({cout_, h, w}), c_state({cout_, h, w});
    TensorT<T> z({4 * cout_, h, w});
    for (std::size_t s = 0; s < d; ++s) {
      const std::size_t t = slice_at(s, d);
      StepCache& sc = steps_[want_cache ? s : 0];
      sc.xcol.resize(cin_ * 9 * hw);
      sc.hcol.resize(cout_ * 9 * hw);
      TensorT<T> h_next({cout_, h, w}), c_next({cout_, h, w});
      step_forward(seq.data() + t * cin_ * hw, h_state.data(), c_state.data(), h, w,
                   sc.xcol.data(), sc.hcol.data(), z, sc.gate, /*skip_h=*/s == 0, h_next, c_next,
                   want_cache ? &sc : nullptr);
      if (want_cache) {
        sc.c_prev = c_state;
      }
      h_state = std::move(h_next);
      c_state = std::move(c_next);
      std::copy(h_state.data(), h_state.data() + cout_ * hw, out_seq_.data() + t * cout_ * hw);
    }
    if (mode == SeqOutput::Last) {
      out_last_ = h_state;
      return out_last_;
    }
    return out_seq_;
  }

  // Backprop through time. d_out is [D,Cout,H,W] (Full) or [Cout,H,W] (Last).
  TensorT<T>& backward(const TensorT<T>& d_out) {
    if (!have_cache_)
      throw StateError(name_ + ": backward called without cached forward intermediates");
    const std::size_t d = in_shape_[0], h = in_shape_[2], w = in_shape_[3];
    const std::size_t hw = h * w, chw = cout_ * hw;

    d_in_.resize(in_shape_);
    TensorT<T> dh({cout_, h, w}), dc({cout_, h, w});
    TensorT<T> dz({4 * cout_, h, w});
    std::vector<T> dwxp(4 * cout_ * cin_ * 9, T(0)), dwhp(4 * cout_ * cout_ * 9, T(0));
    std::vector<T> dbp(4 * cout_, T(0));
    std::vector<T> colg(std::max(cin_, cout_) * 9 * hw);

    for (std::size_t s = d; s-- > 0;) {
      const std::size_t t = slice_at(s, d);
      const StepCache& sc = steps_[s];
      if (out_mode_ == SeqOutput::Full) {
        const T* up = d_out.data() + t * chw;
        for (std::size_t i = 0; i < chw; ++i) dh[i] += up[i];
      } else if (s == d - 1) {
        for (std::size_t i = 0; i < chw; ++i) dh[i] += d_out[i];
      }

      const T* gi = sc.gate[0].data();
      const T* gf = sc.gate[1].data();
      const T* gg = sc.gate[2].data();
      const T* go = sc.gate[3].data();
      const T* tc = sc.tanhc.data();
      const T* cp = sc.c_prev.data();
      T* dzi = dz.data();
      T* dzf = dz.data() + chw;
      T* dzg = dz.data() + 2 * chw;
      T* dzo = dz.data() + 3 * chw;
      for (std::size_t i = 0; i < chw; ++i) {
        const T dhi = dh[i];
        dzo[i] = dhi * tc[i] * go[i] * (T(1) - go[i]);
        const T dci = dc[i] + dhi * go[i] * (T(1) - tc[i] * tc[i]);
        dzi[i] = dci * gg[i] * gi[i] * (T(1) - gi[i]);
        dzf[i] = dci * cp[i] * gf[i] * (T(1) - gf[i]);
        dzg[i] = dci * gi[i] * (T(1) - gg[i] * gg[i]);
        dc[i] = dci * gf[i];  // becomes dc_prev
      }

      gemm<T>(false, true, 4 * cout_, cin_ * 9, hw, T(1), dz.data(), sc.xcol.data(), T(1),
              dwxp.data());
      for (std::size_t r = 0; r < 4 * cout_; ++r) {
        T acc = T(0);
        const T* row = dz.data() + r * hw;
        for (std::size_t i = 0; i < hw; ++i) acc += row[i];
        dbp[r] += acc;
      }
      // d x_t
      gemm<T>(true, false, cin_ * 9, hw, 4 * cout_, T(1), wxp_.data(), dz.data(), T(0),
              colg.data());
      T* dx = d_in_.data() + t * cin_ * hw;
      std::fill(dx, dx + cin_ * hw, T(0));
      col2im3x3_acc(colg.data(), cin_, h, w, dx);
      // d h_prev (zero state at s==0 contributes nothing further)
      if (s > 0) {
        gemm<T>(false, true, 4 * cout_, cout_ * 9, hw, T(1), dz.data(), sc.hcol.data(), T(1),
                dwhp.data());
        gemm<T>(true, false, cout_ * 9, hw, 4 * cout_, T(1), whp_.data(), dz.data(), T(0),
                colg.data());
        dh.zero();
        col2im3x3_acc(colg.data(), cout_, h, w, dh.data());
      } else {
        gemm<T>(true, false, cout_ * 9, hw, 4 * cout_, T(1), whp_.data(), dz.data(), T(0),
                colg.data());
        d_init_h_.resize({cout_, h, w});
        d_init_h_.zero();
        col2im3x3_acc(colg.data(), cout_, h, w, d_init_h_.data());
        d_init_c_ = dc;
      }
    }

    // Scatter packed gradients back to the per-gate parameters.
    for (int g = 0; g < 4; ++g) {
      const std::size_t nx = cout_ * cin_ * 9, nh = cout_ * cout_ * 9;
      for (std::size_t i = 0; i < nx; ++i) wx_[g].grad[i] += dwxp[g * nx + i];
      for (std::size_t i = 0; i < nh; ++i) wh_[g].grad[i] += dwhp[g * nh + i];
      for (std::size_t i = 0; i < cout_; ++i) b_[g].grad[i] += dbp[g * cout_ + i];
    }
    return d_in_;
  }

  const TensorT<T>& d_initial_h() const { return d_init_h_; }
  const TensorT<T>& d_initial_c() const { return d_init_c_; }

 private:
  struct StepCache {
    std::vector<T> xcol, hcol;
    TensorT<T> gate[4];  // post-activation i, f, g, o
    TensorT<T> c_prev, tanhc;
  };

  std::size_t slice_at(std::size_t s, std::size_t d) const {
    return dir_ == Direction::Ascending ? s : d - 1 - s;
  }

  void validate_input(const TensorT<T>& x) {
    require(x.rank() == 3, name_ + ": step input must be [C,H,W]");
    if (x.dim(0) != cin_)
      throw ShapeError(name_ + ": input channels " + shape_str(x.shape()) +
                       " do not match input-gate kernel " + shape_str(wx_[0].value.shape()));
  }

  void validate_input_seq(const TensorT<T>& seq) {
    if (seq.dim(1) != cin_)
      throw ShapeError(name_ + ": input channels " + shape_str(seq.shape()) +
                       " do not match input-gate kernel " + shape_str(wx_[0].value.shape()));
  }

  void pack_weights() {
    const std::size_t nx = cout_ * cin_ * 9, nh = cout_ * cout_ * 9;
    wxp_.resize(4 * nx);
    whp_.resize(4 * nh);
    bp_.resize(4 * cout_);
    for (int g = 0; g < 4; ++g) {
      std::copy(wx_[g].value.data(), wx_[g].value.data() + nx, wxp_.data() + g * nx);
      std::copy(wh_[g].value.data(), wh_[g].value.data() + nh, whp_.data() + g * nh);
      std::copy(b_[g].value.data(), b_[g].value.data() + cout_, bp_.data() + g * cout_);
    }
  }

  void step_forward(const T* x, const T* h_prev, const T* c_prev, std::size_t h, std::size_t w,
                    T* xcol, T* hcol, TensorT<T>& z, TensorT<T>* gates, bool skip_h,
                    TensorT<T>& h_next, TensorT<T>& c_next, StepCache* sc) {
    const std::size_t hw = h * w, chw = cout_ * hw;
    im2col3x3(x, cin_, h, w, xcol);
    gemm<T>(false, false, 4 * cout_, hw, cin_ * 9, T(1), wxp_.data(), xcol, T(0), z.data());
    if (skip_h) {
      std::fill(hcol, hcol + cout_ * 9 * hw, T(0));
    } else {
      im2col3x3(h_prev, cout_, h, w, hcol);
      gemm<T>(false, false, 4 * cout_, hw, cout_ * 9, T(1), whp_.data(), hcol, T(1), z.data());
    }
    for (std::size_t r = 0; r < 4 * cout_; ++r) {
      T* row = z.data() + r * hw;
      const T bias = bp_[r];
      for (std::size_t i = 0; i < hw; ++i) row[i] += bias;
    }

    TensorT<T> local[4];
    TensorT<T>* g = sc ? sc->gate : (gates ? gates : local);
    for (int k = 0; k < 4; ++k) g[k].resize({cout_, h, w});
    const T* zi = z.data();
    for (std::size_t i = 0; i < chw; ++i) g[0][i] = sigmoid_scalar(zi[i]);
    for (std::size_t i = 0; i < chw; ++i) g[1][i] = sigmoid_scalar(zi[chw + i]);
    for (std::size_t i = 0; i < chw; ++i) g[2][i] = std::tanh(zi[2 * chw + i]);
    for (std::size_t i = 0; i < chw; ++i) g[3][i] = sigmoid_scalar(zi[3 * chw + i]);

    h_next.resize({cout_, h, w});
    c_next.resize({cout_, h, w});
    if (sc) sc->tanhc.resize({cout_, h, w});
    for (std::size_t i = 0; i < chw; ++i) {
      const T c = g[1][i] * c_prev[i] + g[0][i] * g[2][i];
      const T tc = std::tanh(c);
      c_next[i] = c;
      h_next[i] = g[3][i] * tc;
      if (sc) sc->tanhc[i] = tc;
    }
  }

  std::string name_;
  std::size_t cin_, cout_;
  ParamTensorT<T> wx_[4], wh_[4], b_[4];
  std::vector<T> wxp_, whp_, bp_;

  Direction dir_ = Direction::Ascending;
  SeqOutput out_mode_ = SeqOutput::Full;
  Shape in_shape_;
  bool have_cache_ = false;
  std::vector<StepCache> steps_;
  TensorT<T> out_seq_, out_last_, d_in_, d_init_h_, d_init_c_;
};

}  // namespace volscan
