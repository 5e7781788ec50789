#pragma once

#include <cstddef>
#include <cstdint>

#include "t2iaudit/types.hpp"

namespace t2iaudit {

struct PerturbationSpec {
  Scope scope = Scope::global();
  std::size_t step_index = 1;
  double delta_p = 0.05;
  std::uint64_t seed = 0;

  void validate() const;
};

// Population standard deviation over all entries.
double sigma_global(const EmbeddingMatrix& x);
// Population standard deviation of one row; rejects special-token rows.
double sigma_local(const EmbeddingMatrix& x, std::size_t token_index);

// step_index * delta_p * sigma over the perturbation's scope.
double phi_for(const EmbeddingMatrix& x, const PerturbationSpec& spec);

// x * R elementwise, R ~ U[1 - phi, 1 + phi] i.i.d. Local scope touches only
// the addressed row. Throws Degenerate when sigma is zero.
EmbeddingMatrix apply(const EmbeddingMatrix& x, const PerturbationSpec& spec);

}  // namespace t2iaudit
