#include "t2iaudit/types.hpp"

#include <cmath>

#include "t2iaudit/error.hpp"

namespace t2iaudit {

std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidArgument: return "INVALID_ARGUMENT";
    case ErrorCode::OutOfRange: return "OUT_OF_RANGE";
    case ErrorCode::Degenerate: return "DEGENERATE";
    case ErrorCode::InsufficientData: return "INSUFFICIENT_DATA";
    case ErrorCode::Parse: return "PARSE";
    case ErrorCode::Io: return "IO";
    case ErrorCode::BadDims: return "BAD_DIMS";
    case ErrorCode::UnsupportedConditioning: return "UNSUPPORTED_CONDITIONING";
    case ErrorCode::OverLength: return "OVER_LENGTH";
    case ErrorCode::Transport: return "TRANSPORT";
    case ErrorCode::Internal: return "INTERNAL";
  }
  return "INTERNAL";
}

EmbeddingMatrix::EmbeddingMatrix(std::size_t rows, std::size_t dims, std::vector<double> values,
                                 std::vector<TokenInfo> tokens)
    : rows_(rows), dims_(dims), values_(std::move(values)), tokens_(std::move(tokens)) {
  if (rows_ == 0 || dims_ == 0) {
    throw AuditError(ErrorCode::BadDims, "embedding matrix needs at least one row and one column");
  }
  if (values_.size() != rows_ * dims_) {
    throw AuditError(ErrorCode::BadDims, "embedding matrix has " + std::to_string(values_.size()) +
                                             " entries, expected " + std::to_string(rows_ * dims_));
  }
  if (tokens_.size() != rows_) {
    throw AuditError(ErrorCode::BadDims, "embedding matrix has " + std::to_string(tokens_.size()) +
                                             " tokens for " + std::to_string(rows_) + " rows");
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw AuditError(ErrorCode::BadDims, "embedding matrix has a non-finite entry");
  }
}

std::span<const double> EmbeddingMatrix::row(std::size_t r) const {
  if (r >= rows_) {
    throw AuditError(ErrorCode::OutOfRange, "row " + std::to_string(r) + " out of range (rows = " +
                                                std::to_string(rows_) + ")");
  }
  return std::span<const double>(values_).subspan(r * dims_, dims_);
}

EmbeddingMatrix EmbeddingMatrix::with_values(std::vector<double> values) const {
  return EmbeddingMatrix(rows_, dims_, std::move(values), tokens_);
}

ImageFeature::ImageFeature(std::vector<double> values, std::uint64_t source_seed)
    : values_(std::move(values)), source_seed_(source_seed) {
  for (double v : values_) {
    if (!std::isfinite(v)) throw AuditError(ErrorCode::BadDims, "image feature has a non-finite entry");
  }
  if (!(norm() > 1e-12)) {
    throw AuditError(ErrorCode::Degenerate, "image feature has zero norm");
  }
}

double ImageFeature::norm() const noexcept {
  double s = 0.0;
  for (double v : values_) s += v * v;
  return std::sqrt(s);
}

void GenerationRequest::validate() const {
  if (!(guidance >= 0.0) || !std::isfinite(guidance)) {
    throw AuditError(ErrorCode::InvalidArgument, "guidance must be finite and >= 0");
  }
  if (steps < 1) throw AuditError(ErrorCode::InvalidArgument, "steps must be >= 1");
  if (!has_embedding() && std::get<std::string>(conditioning).empty()) {
    throw AuditError(ErrorCode::InvalidArgument, "prompt conditioning must not be empty");
  }
}

std::size_t Scope::token_index() const {
  if (!token_) throw AuditError(ErrorCode::InvalidArgument, "global scope has no token index");
  return *token_;
}

}  // namespace t2iaudit
