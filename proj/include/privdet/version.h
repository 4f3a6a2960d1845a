#pragma once

namespace privdet {

inline constexpr const char* kToolName = "privdet";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace privdet
