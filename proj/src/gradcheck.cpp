#include "oa/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <stdexcept>

namespace oa {

double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / (std::abs(analytic) + std::abs(numeric) + 1e-12);
}

GradCheckReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> leaves,
                                const GradCheckOptions& options) {
  if (leaves.empty()) throw std::invalid_argument("check_gradients: no leaves");
  for (auto& leaf : leaves) {
    if (!leaf.requires_grad()) throw std::invalid_argument("check_gradients: leaf does not require grad");
    leaf.zero_grad();
  }
  loss().backward();

  std::vector<std::vector<double>> analytic;
  std::vector<std::pair<std::size_t, std::size_t>> nonzero;
  std::size_t total = 0;
  for (std::size_t l = 0; l < leaves.size(); ++l) {
    const auto g = leaves[l].grad();
    analytic.emplace_back(leaves[l].numel(), 0.0);
    for (std::size_t i = 0; i < g.size(); ++i) {
      analytic[l][i] = g[i];
      if (g[i] != 0.0) nonzero.emplace_back(l, i);
    }
    total += leaves[l].numel();
  }

  Rng rng(options.seed);
  auto pick_any = [&]() {
    std::size_t k = rng.below(total);
    for (std::size_t l = 0; l < leaves.size(); ++l) {
      if (k < leaves[l].numel()) return std::pair{l, k};
      k -= leaves[l].numel();
    }
    return std::pair<std::size_t, std::size_t>{0, 0};
  };

  GradCheckReport report;
  for (std::size_t p = 0; p < options.probes; ++p) {
    // Mostly probe entries with a live gradient; some uniform probes confirm
    // that zero gradients are really zero.
    const bool uniform = nonzero.empty() || p % 4 == 3;
    const auto [l, i] = uniform ? pick_any() : nonzero[rng.below(nonzero.size())];
    auto data = leaves[l].mutable_data();
    const double saved = data[i];
    data[i] = saved + options.step;
    const double up = loss().item();
    data[i] = saved - options.step;
    const double down = loss().item();
    data[i] = saved;
    const double numeric = (up - down) / (2.0 * options.step);
    const double err = relative_error(analytic[l][i], numeric);
    const double roundoff = 8.0 * std::numeric_limits<double>::epsilon() *
                            std::max({std::abs(up), std::abs(down), 1.0}) / options.step;
    ++report.probes;
    if (err >= options.tolerance) {
      if (std::abs(analytic[l][i] - numeric) <= roundoff) {
        ++report.unresolved;
        continue;
      }
      ++report.failures;
    }
    if (err >= report.max_rel_error) {
      report.max_rel_error = err;
      std::ostringstream os;
      os << "leaf" << l << "#" << i << " analytic=" << analytic[l][i] << " numeric=" << numeric;
      report.worst = os.str();
    }
  }
  return report;
}

Tensor projection_loss(const Tensor& y, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> w(y.numel());
  for (double& v : w) v = rng.uniform(-1.0, 1.0);
  return sum(mul(y, Tensor(y.shape(), std::move(w))));
}

}  // namespace oa
