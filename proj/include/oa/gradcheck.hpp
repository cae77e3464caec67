#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "oa/rng.hpp"
#include "oa/tensor.hpp"

namespace oa {

struct GradCheckOptions {
  std::size_t probes = 100;
  double step = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t seed = 7;
};

struct GradCheckReport {
  std::size_t probes = 0;
  std::size_t failures = 0;
  // Probes over tolerance whose analytic/numeric difference is still below the
  // central-difference roundoff bound (about eps * |f| / h).
  std::size_t unresolved = 0;
  double max_rel_error = 0.0;  // over all probes except the unresolved ones
  std::string worst;  // "leaf#index analytic=... numeric=..."

  bool passed() const { return failures == 0; }
};

// |a - n| / (|a| + |n| + 1e-12)
double relative_error(double analytic, double numeric);

// Compares analytic gradients of `loss` (a scalar-valued closure rebuilt on
// every call) with central differences, perturbing entries of `leaves` in
// place. The closure must be deterministic.
GradCheckReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                const GradCheckOptions& options = {});

// sum(y * w) for a fixed pseudo-random w derived from `seed`; turns a tensor
// output into a scalar whose gradient exercises every entry.
Tensor projection_loss(const Tensor& y, std::uint64_t seed);

}  // namespace oa
