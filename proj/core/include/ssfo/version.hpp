#pragma once

namespace ssfo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace ssfo
