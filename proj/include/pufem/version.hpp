#pragma once

namespace pufem {

inline constexpr const char* kVersion = "0.1.0";

} // namespace pufem
