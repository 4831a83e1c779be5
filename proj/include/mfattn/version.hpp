#pragma once

namespace mfattn {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mfattn
