#pragma once

namespace grpolab {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace grpolab
