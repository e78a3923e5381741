#pragma once

#include <functional>
#include <string>
#include <vector>

#include "volscan/rng.hpp"
#include "volscan/tensor.hpp"

namespace volscan {

// Central-difference gradient checking. The objective is always evaluated in
// double precision; the analytic gradients under test may come from the float
// path (cast exactly into doubles) or the double path.

struct GradCheckSpec {
  double step = 1e-5;        // central-difference h
  std::size_t samples = 32;  // coordinates sampled per tensor
  std::uint64_t seed = 7;
  // Coordinates where analytic and numeric agree within atol pass outright.
  // FD measurement noise is ~ulp(loss)/step ~ 1e-11 here, so gradients that
  // are structurally zero (e.g. a conv bias absorbed by the following BN)
  // would otherwise divide noise by the 1e-8 floor.
  double atol = 1e-9;
};

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst;  // "tensor[i]" of the worst coordinate
};

// One differentiable quantity: mutate values through `tensors`, re-evaluate
// with `eval`, compare against `analytic` (same order/shape as `tensors`).
GradCheckResult grad_check(const std::function<double()>& eval,
                           const std::vector<std::pair<std::string, TensorD*>>& tensors,
                           const std::vector<const TensorD*>& analytic,
                           const GradCheckSpec& spec = {});

// Named suite covering every differentiable op and the full models; used by
// both the CLI `gradcheck` subcommand and the acceptance tests.
struct SuiteCheck {
  std::string name;
  std::function<GradCheckResult()> run;
};

std::vector<SuiteCheck> gradcheck_suite();

struct SuiteOutcome {
  std::string name;
  bool ok = false;
  double max_rel_err = 0.0;
  std::string detail;
};

// Runs checks whose name is in `only` (all when empty) at `tolerance`.
std::vector<SuiteOutcome> run_gradcheck_suite(const std::vector<std::string>& only,
                                              double tolerance);

}  // namespace volscan
