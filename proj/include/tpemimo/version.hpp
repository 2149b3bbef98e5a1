#pragma once

namespace tpemimo {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace tpemimo
