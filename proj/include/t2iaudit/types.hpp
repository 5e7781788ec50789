#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

namespace t2iaudit {

struct TokenInfo {
  std::string text;
  std::int64_t id = 0;
  bool special = false;  // begin/end markers; no surface form in the prompt

  bool operator==(const TokenInfo&) const = default;
};

// Occupied rows of a prompt's token embedding (padding excluded), row-major,
// with one TokenInfo per row.
class EmbeddingMatrix {
 public:
  EmbeddingMatrix(std::size_t rows, std::size_t dims, std::vector<double> values,
                  std::vector<TokenInfo> tokens);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t dims() const noexcept { return dims_; }
  std::span<const double> row(std::size_t r) const;
  double at(std::size_t r, std::size_t c) const { return values_[r * dims_ + c]; }
  const std::vector<double>& values() const noexcept { return values_; }
  const std::vector<TokenInfo>& tokens() const noexcept { return tokens_; }

  // Same tokens, new entries (validated like the constructor).
  EmbeddingMatrix with_values(std::vector<double> values) const;

  bool operator==(const EmbeddingMatrix&) const = default;

 private:
  std::size_t rows_;
  std::size_t dims_;
  std::vector<double> values_;
  std::vector<TokenInfo> tokens_;
};

// Feature-space stand-in for a generated image.
class ImageFeature {
 public:
  ImageFeature(std::vector<double> values, std::uint64_t source_seed);

  std::span<const double> values() const noexcept { return values_; }
  std::size_t size() const noexcept { return values_.size(); }
  std::uint64_t source_seed() const noexcept { return source_seed_; }
  double norm() const noexcept;

  bool operator==(const ImageFeature&) const = default;

 private:
  std::vector<double> values_;
  std::uint64_t source_seed_;
};

struct GenerationRequest {
  std::variant<EmbeddingMatrix, std::string> conditioning;
  double guidance = 7.5;
  int steps = 50;
  std::uint64_t noise_seed = 0;
  bool want_image = false;

  bool has_embedding() const noexcept { return conditioning.index() == 0; }
  void validate() const;
};

class Scope {
 public:
  static Scope global() { return Scope{}; }
  static Scope local(std::size_t token_index) { return Scope{token_index}; }

  bool is_global() const noexcept { return !token_.has_value(); }
  std::size_t token_index() const;

  bool operator==(const Scope&) const = default;

 private:
  Scope() = default;
  explicit Scope(std::size_t token) : token_(token) {}
  std::optional<std::size_t> token_;
};

struct SensitivityRecord {
  std::string prompt_id;
  Scope scope = Scope::global();
  std::string token;  // surface form for local records, empty for global
  double phi = 0.0;
  std::size_t step_index = 0;
  bool censored = false;
  double similarity_at_cross = 0.0;  // aggregated cosine at the crossing (or last) step

  bool operator==(const SensitivityRecord&) const = default;
};

struct ReliabilityDistribution {
  std::vector<double> samples;
  std::vector<double> grid;
  std::vector<double> density;
  double bandwidth = 0.0;
  double phi_mo = 0.0;
  double mode = 0.0;
  std::size_t censored_count = 0;
};

}  // namespace t2iaudit
