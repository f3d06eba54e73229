#pragma once

namespace sxn {

inline constexpr const char* kVersion = "1.0.0";

}  // namespace sxn
