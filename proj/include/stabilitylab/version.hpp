#pragma once

namespace stabilitylab {

inline constexpr const char* version = "0.1.0";

}  // namespace stabilitylab
