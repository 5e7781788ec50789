#include "t2iaudit/backend.hpp"

#include "t2iaudit/error.hpp"

namespace t2iaudit {

void BackendInfo::validate() const {
  if (d < 1 || d_v < 1) throw AuditError(ErrorCode::BadDims, "backend reports zero embedding or feature width");
  if (max_tokens < 1) throw AuditError(ErrorCode::BadDims, "backend reports max_tokens = 0");
}

GenerationResult generate_from_prompt(const Backend& backend, const std::string& prompt, double guidance,
                                      int steps, std::uint64_t noise_seed) {
  GenerationRequest req{.conditioning = prompt, .guidance = guidance, .steps = steps, .noise_seed = noise_seed};
  if (!backend.info().capabilities.prompt_conditioning) req.conditioning = backend.encode(prompt);
  return backend.generate(req);
}

}  // namespace t2iaudit
