#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

#include "t2iaudit/types.hpp"

namespace t2iaudit {

struct Capabilities {
  bool embedding_conditioning = false;
  bool prompt_conditioning = false;
  bool image_bytes = false;

  bool operator==(const Capabilities&) const = default;
};

struct BackendInfo {
  std::string model_id;
  std::size_t d = 0;
  std::size_t d_v = 0;
  std::size_t max_tokens = 0;
  std::string feature_extractor_id;
  Capabilities capabilities;

  void validate() const;
  bool operator==(const BackendInfo&) const = default;
};

struct GenerationResult {
  ImageFeature feature;
  std::optional<std::string> image_b64;

  bool operator==(const GenerationResult&) const = default;
};

// Implementations must be safe to call concurrently from several threads.
class Backend {
 public:
  virtual ~Backend() = default;

  virtual BackendInfo info() const = 0;
  virtual EmbeddingMatrix encode(std::string_view prompt) const = 0;
  virtual GenerationResult generate(const GenerationRequest& request) const = 0;
};

// Generates from a prompt, through prompt conditioning when the backend has it
// and through encode + embedding conditioning otherwise.
GenerationResult generate_from_prompt(const Backend& backend, const std::string& prompt, double guidance,
                                      int steps, std::uint64_t noise_seed);

}  // namespace t2iaudit
