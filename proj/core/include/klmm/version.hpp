#pragma once

namespace klmm {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace klmm
