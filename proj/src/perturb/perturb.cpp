#include "t2iaudit/perturb.hpp"

#include <cmath>
#include <span>
#include <string>

#include "t2iaudit/error.hpp"
#include "t2iaudit/seed.hpp"

namespace t2iaudit {

namespace {

double population_sd(std::span<const double> v) {
  double mean = 0.0;
  for (double a : v) mean += a;
  mean /= static_cast<double>(v.size());
  double ss = 0.0;
  for (double a : v) ss += (a - mean) * (a - mean);
  return std::sqrt(ss / static_cast<double>(v.size()));
}

}  // namespace

void PerturbationSpec::validate() const {
  if (step_index < 1) throw AuditError(ErrorCode::InvalidArgument, "step_index must be >= 1");
  if (!(delta_p > 0.0) || !std::isfinite(delta_p)) {
    throw AuditError(ErrorCode::InvalidArgument, "delta_p must be > 0");
  }
}

double sigma_global(const EmbeddingMatrix& x) { return population_sd(x.values()); }

double sigma_local(const EmbeddingMatrix& x, std::size_t token_index) {
  if (token_index >= x.rows()) {
    throw AuditError(ErrorCode::OutOfRange, "token index " + std::to_string(token_index) +
                                                " out of range (rows = " + std::to_string(x.rows()) + ")");
  }
  if (x.tokens()[token_index].special) {
    throw AuditError(ErrorCode::InvalidArgument,
                     "token " + std::to_string(token_index) + " is a special token");
  }
  return population_sd(x.row(token_index));
}

double phi_for(const EmbeddingMatrix& x, const PerturbationSpec& spec) {
  spec.validate();
  const double sigma =
      spec.scope.is_global() ? sigma_global(x) : sigma_local(x, spec.scope.token_index());
  return static_cast<double>(spec.step_index) * spec.delta_p * sigma;
}

EmbeddingMatrix apply(const EmbeddingMatrix& x, const PerturbationSpec& spec) {
  const double phi = phi_for(x, spec);
  if (!(phi > 0.0)) {
    throw AuditError(ErrorCode::Degenerate, spec.scope.is_global()
                                                ? "embedding has zero standard deviation"
                                                : "token row " + std::to_string(spec.scope.token_index()) +
                                                      " has zero standard deviation");
  }
  Rng rng(spec.seed);
  std::vector<double> out = x.values();
  std::size_t begin = 0;
  std::size_t end = out.size();
  if (!spec.scope.is_global()) {
    begin = spec.scope.token_index() * x.dims();
    end = begin + x.dims();
  }
  for (std::size_t k = begin; k < end; ++k) {
    out[k] *= 1.0 - phi + 2.0 * phi * rng.uniform01();
  }
  return x.with_values(std::move(out));
}

}  // namespace t2iaudit
