#pragma once

#include <string>
#include <string_view>

#include "json.hpp"
#include "t2iaudit/backend.hpp"
#include "t2iaudit/error.hpp"

// JSON bodies of the /v1 wire protocol. nlohmann::json keeps object keys
// sorted, so dump() is the canonical serialization used for hashing.
namespace t2iaudit::protocol {

inline constexpr std::string_view kInfoPath = "/v1/info";
inline constexpr std::string_view kEncodePath = "/v1/encode";
inline constexpr std::string_view kGeneratePath = "/v1/generate";

nlohmann::json info_to_json(const BackendInfo& info);
BackendInfo info_from_json(const nlohmann::json& j);

nlohmann::json encode_request(std::string_view prompt);
std::string encode_request_prompt(const nlohmann::json& j);

nlohmann::json embedding_to_json(const EmbeddingMatrix& x);
EmbeddingMatrix embedding_from_json(const nlohmann::json& j);

nlohmann::json generate_request_to_json(const GenerationRequest& req);
GenerationRequest generate_request_from_json(const nlohmann::json& j);

nlohmann::json generate_response_to_json(const GenerationResult& result);
GenerationResult generate_response_from_json(const nlohmann::json& j, std::uint64_t noise_seed);

// Wire error codes: BAD_DIMS, UNSUPPORTED_CONDITIONING, OVER_LENGTH, INTERNAL.
std::string_view wire_code(ErrorCode code);
ErrorCode code_from_wire(std::string_view wire);
nlohmann::json error_to_json(ErrorCode code, std::string_view detail);

std::string canonical(const nlohmann::json& j);

}  // namespace t2iaudit::protocol
