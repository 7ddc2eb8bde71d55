#pragma once

namespace voi {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace voi
