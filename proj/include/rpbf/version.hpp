#pragma once

namespace rpbf {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace rpbf
