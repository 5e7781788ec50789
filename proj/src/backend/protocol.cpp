#include "t2iaudit/protocol.hpp"

#include <string>

namespace t2iaudit::protocol {

using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& what) {
  throw BackendError(ErrorCode::Parse, "malformed protocol message: " + what);
}

const json& field(const json& j, const char* key) {
  if (!j.is_object()) malformed("expected an object");
  auto it = j.find(key);
  if (it == j.end()) malformed(std::string("missing field '") + key + "'");
  return *it;
}

std::size_t count_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    malformed(std::string("field '") + key + "' must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

std::string string_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_string()) malformed(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

bool bool_field(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_boolean()) malformed(std::string("field '") + key + "' must be a boolean");
  return v.get<bool>();
}

double number_of(const json& v, const char* what) {
  if (!v.is_number()) malformed(std::string(what) + " must be a number");
  return v.get<double>();
}

}  // namespace

json info_to_json(const BackendInfo& info) {
  return json{{"model_id", info.model_id},
              {"d", info.d},
              {"d_v", info.d_v},
              {"max_tokens", info.max_tokens},
              {"feature_extractor_id", info.feature_extractor_id},
              {"capabilities",
               {{"embedding_conditioning", info.capabilities.embedding_conditioning},
                {"prompt_conditioning", info.capabilities.prompt_conditioning},
                {"image_bytes", info.capabilities.image_bytes}}}};
}

BackendInfo info_from_json(const json& j) {
  BackendInfo info;
  info.model_id = string_field(j, "model_id");
  info.d = count_field(j, "d");
  info.d_v = count_field(j, "d_v");
  info.max_tokens = count_field(j, "max_tokens");
  info.feature_extractor_id = string_field(j, "feature_extractor_id");
  const json& caps = field(j, "capabilities");
  info.capabilities.embedding_conditioning = bool_field(caps, "embedding_conditioning");
  info.capabilities.prompt_conditioning = bool_field(caps, "prompt_conditioning");
  info.capabilities.image_bytes = bool_field(caps, "image_bytes");
  info.validate();
  return info;
}

json encode_request(std::string_view prompt) { return json{{"prompt", std::string(prompt)}}; }

std::string encode_request_prompt(const json& j) { return string_field(j, "prompt"); }

json embedding_to_json(const EmbeddingMatrix& x) {
  json tokens = json::array();
  for (const auto& t : x.tokens()) tokens.push_back({{"text", t.text}, {"id", t.id}, {"special", t.special}});
  json rows = json::array();
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    rows.push_back(json(std::vector<double>(row.begin(), row.end())));
  }
  return json{{"tokens", std::move(tokens)}, {"embedding", std::move(rows)}};
}

namespace {

// Parses [[number x d] x n]; the token list is optional (absent in generate bodies).
EmbeddingMatrix matrix_from(const json& rows, const json* tokens) {
  if (!rows.is_array() || rows.empty()) throw BackendError(ErrorCode::BadDims, "embedding must be a non-empty array");
  const std::size_t n = rows.size();
  std::size_t d = 0;
  std::vector<double> values;
  for (const auto& row : rows) {
    if (!row.is_array() || row.empty()) throw BackendError(ErrorCode::BadDims, "embedding rows must be non-empty arrays");
    if (d == 0) {
      d = row.size();
      values.reserve(n * d);
    } else if (row.size() != d) {
      throw BackendError(ErrorCode::BadDims, "embedding rows have unequal lengths");
    }
    for (const auto& v : row) {
      if (!v.is_number()) throw BackendError(ErrorCode::BadDims, "embedding entries must be numbers");
      values.push_back(v.get<double>());
    }
  }
  std::vector<TokenInfo> toks;
  if (tokens) {
    if (!tokens->is_array()) malformed("tokens must be an array");
    for (const auto& t : *tokens) {
      const json& id = field(t, "id");
      if (!id.is_number_integer()) malformed("token id must be an integer");
      toks.push_back({string_field(t, "text"), id.get<std::int64_t>(), bool_field(t, "special")});
    }
  } else {
    toks.resize(n);
  }
  try {
    return EmbeddingMatrix(n, d, std::move(values), std::move(toks));
  } catch (const AuditError& e) {
    throw BackendError(ErrorCode::BadDims, e.what());
  }
}

}  // namespace

EmbeddingMatrix embedding_from_json(const json& j) {
  return matrix_from(field(j, "embedding"), &field(j, "tokens"));
}

json generate_request_to_json(const GenerationRequest& req) {
  json j{{"guidance", req.guidance},
         {"steps", req.steps},
         {"noise_seed", req.noise_seed},
         {"want_image", req.want_image},
         {"embedding", nullptr},
         {"prompt", nullptr}};
  if (req.has_embedding()) {
    const auto& x = std::get<EmbeddingMatrix>(req.conditioning);
    j["embedding"] = embedding_to_json(x)["embedding"];
  } else {
    j["prompt"] = std::get<std::string>(req.conditioning);
  }
  return j;
}

GenerationRequest generate_request_from_json(const json& j) {
  const json& emb = field(j, "embedding");
  const json& prompt = field(j, "prompt");
  if (emb.is_null() == prompt.is_null()) malformed("exactly one of 'embedding' and 'prompt' must be non-null");
  GenerationRequest req{.conditioning = std::string()};
  if (!emb.is_null()) {
    req.conditioning = matrix_from(emb, nullptr);
  } else {
    if (!prompt.is_string()) malformed("'prompt' must be a string");
    req.conditioning = prompt.get<std::string>();
  }
  req.guidance = number_of(field(j, "guidance"), "guidance");
  const json& steps = field(j, "steps");
  if (!steps.is_number_integer()) malformed("'steps' must be an integer");
  req.steps = steps.get<int>();
  const json& seed = field(j, "noise_seed");
  if (!seed.is_number_unsigned() && !(seed.is_number_integer() && seed.get<std::int64_t>() >= 0)) {
    malformed("'noise_seed' must be a non-negative integer");
  }
  req.noise_seed = seed.get<std::uint64_t>();
  req.want_image = bool_field(j, "want_image");
  return req;
}

json generate_response_to_json(const GenerationResult& result) {
  auto f = result.feature.values();
  json j{{"feature", std::vector<double>(f.begin(), f.end())}, {"image_b64", nullptr}};
  if (result.image_b64) j["image_b64"] = *result.image_b64;
  return j;
}

GenerationResult generate_response_from_json(const json& j, std::uint64_t noise_seed) {
  const json& f = field(j, "feature");
  if (!f.is_array()) malformed("'feature' must be an array");
  std::vector<double> values;
  values.reserve(f.size());
  for (const auto& v : f) values.push_back(number_of(v, "feature entries"));
  const json& img = field(j, "image_b64");
  std::optional<std::string> image;
  if (!img.is_null()) {
    if (!img.is_string()) malformed("'image_b64' must be a string or null");
    image = img.get<std::string>();
  }
  try {
    return GenerationResult{ImageFeature(std::move(values), noise_seed), std::move(image)};
  } catch (const AuditError& e) {
    throw BackendError(ErrorCode::BadDims, e.what());
  }
}

std::string_view wire_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::BadDims: return "BAD_DIMS";
    case ErrorCode::UnsupportedConditioning: return "UNSUPPORTED_CONDITIONING";
    case ErrorCode::OverLength: return "OVER_LENGTH";
    default: return "INTERNAL";
  }
}

ErrorCode code_from_wire(std::string_view wire) {
  if (wire == "BAD_DIMS") return ErrorCode::BadDims;
  if (wire == "UNSUPPORTED_CONDITIONING") return ErrorCode::UnsupportedConditioning;
  if (wire == "OVER_LENGTH") return ErrorCode::OverLength;
  return ErrorCode::Internal;
}

json error_to_json(ErrorCode code, std::string_view detail) {
  return json{{"error", std::string(wire_code(code))}, {"detail", std::string(detail)}};
}

std::string canonical(const json& j) { return j.dump(); }

}  // namespace t2iaudit::protocol
