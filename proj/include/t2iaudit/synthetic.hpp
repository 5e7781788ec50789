#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "t2iaudit/backend.hpp"

namespace t2iaudit {

struct SyntheticVocabEntry {
  std::string token;
  double specificity = 0.0;  // offset along the specificity axis; higher means less output spread
};

struct SyntheticBias {
  std::string trigger_token;
  std::optional<std::vector<double>> target_feature;  // seeded when absent
  double snap_radius = 0.5;       // relative to the trigger embedding norm
  double redirect_gain = 40.0;    // response to displacement from the trigger
  double footprint_weight = 1.0;  // weight of the prompt-dependent residual
  double footprint_frequency = 11.0;
};

struct SyntheticBoundary {
  double weight = 1.0;
  double sharpness = 83.0;
  double spread = 0.06;
};

struct SyntheticModelSpec {
  std::string model_id = "synthetic";
  std::uint64_t seed = 1;
  std::size_t d = 16;
  std::size_t d_v = 32;
  std::size_t max_tokens = 77;
  double smoothness = 1.0;  // lambda_s
  double noise_scale = 4.0;
  double specificity_gain = 1.0;
  SyntheticBoundary boundary;
  std::vector<SyntheticVocabEntry> vocab;
  std::optional<SyntheticBias> bias;

  void validate() const;
};

SyntheticModelSpec synthetic_spec_from_json(const nlohmann::json& j);
SyntheticModelSpec load_synthetic_spec(const std::filesystem::path& path);

// Lower-cased word pieces: alphanumeric runs, single ASCII punctuation marks,
// and single non-ASCII code points.
std::vector<std::string> synthetic_tokenize(std::string_view prompt);

inline constexpr std::string_view kBeginToken = "<bos>";
inline constexpr std::string_view kEndToken = "<eos>";

// Deterministic in-process text-to-feature model. Each token maps to a seeded
// embedding; generation pools the rows, maps them through a seeded nonlinear
// projection, and adds guidance-scaled noise. With a bias block, any row near
// the trigger embedding redirects the output to a fixed target feature.
class SyntheticBackend final : public Backend {
 public:
  explicit SyntheticBackend(SyntheticModelSpec spec);

  BackendInfo info() const override;
  EmbeddingMatrix encode(std::string_view prompt) const override;
  GenerationResult generate(const GenerationRequest& request) const override;

  const SyntheticModelSpec& spec() const noexcept { return spec_; }
  std::vector<double> token_embedding(std::string_view token) const;
  std::int64_t token_id(std::string_view token) const;

 private:
  GenerationResult generate_embedding(const EmbeddingMatrix& x, double guidance, std::uint64_t noise_seed) const;

  SyntheticModelSpec spec_;
  std::vector<double> w_, b_, w2_, b2_, q_;  // row-major d_v x d matrices and d_v offsets
  std::vector<double> u_, ws_;               // orthonormal specificity / boundary axes (length d)
  std::vector<double> v_, target_;           // unit vectors (length d_v)
  std::vector<double> trigger_;              // trigger embedding when biased
  double trigger_norm_ = 0.0;
};

}  // namespace t2iaudit
