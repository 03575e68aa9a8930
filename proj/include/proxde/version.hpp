#pragma once

namespace proxde {

inline constexpr const char* kVersion = "0.1.0";

} // namespace proxde
