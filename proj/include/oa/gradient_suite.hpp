#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "oa/gradcheck.hpp"
#include "oa/ortho_attention.hpp"

namespace oa {

struct GradCheckRow {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks of every tensor operation on small random inputs.
std::vector<GradCheckRow> op_gradient_suite(std::uint64_t seed, const GradCheckOptions& options = {});

// alpha, beta, head, multihead, encoder block and the full model with a toy
// backbone for one variant; contexts of m = 5 rows, queries of n = 2 rows.
std::vector<GradCheckRow> layer_gradient_suite(Variant variant, std::size_t d, std::size_t n_heads,
                                               std::uint64_t seed, const GradCheckOptions& options = {});

std::string gradcheck_table(std::span<const GradCheckRow> rows);

}  // namespace oa
