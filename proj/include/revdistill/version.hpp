#pragma once

namespace revdistill {
inline constexpr const char* kVersion = "0.1.0";
}
