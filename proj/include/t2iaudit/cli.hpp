#pragma once

#include <iosfwd>
#include <memory>
#include <optional>
#include <string>

#include "t2iaudit/backend.hpp"

namespace t2iaudit {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFatal = 1;
inline constexpr int kExitPartial = 2;

// --synthetic wins over --backend, which wins over $AUDIT_BACKEND_URL.
std::unique_ptr<Backend> make_backend(const std::optional<std::string>& url, const std::optional<std::string>& synthetic);

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace t2iaudit
