#pragma once

#include <Eigen/Core>
#include <cstddef>

namespace volscan {

// Row-major GEMM on raw buffers: C = alpha * op(A) * op(B) + beta * C.
// Single-threaded and deterministic; the only float kernel not written here.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, T alpha,
          const T* a, const T* b, T beta, T* c) {
  using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using CMap = Eigen::Map<Mat>;
  using Map = Eigen::Map<const Mat>;
  const auto im = Eigen::Index(m), in = Eigen::Index(n), ik = Eigen::Index(k);

  CMap cm(c, im, in);
  auto run = [&](const auto& ab) {
    if (beta == T(0)) {
      if (alpha == T(1))
        cm.noalias() = ab;
      else
        cm.noalias() = alpha * ab;
    } else {
      // beta is only ever 0 or 1 in this codebase.
      if (alpha == T(1))
        cm.noalias() += ab;
      else
        cm.noalias() += alpha * ab;
    }
  };

  if (!trans_a && !trans_b)
    run(Map(a, im, ik) * Map(b, ik, in));
  else if (!trans_a && trans_b)
    run(Map(a, im, ik) * Map(b, in, ik).transpose());
  else if (trans_a && !trans_b)
    run(Map(a, ik, im).transpose() * Map(b, ik, in));
  else
    run(Map(a, ik, im).transpose() * Map(b, in, ik).transpose());
}

}  // namespace volscan
