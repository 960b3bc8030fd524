#pragma once

namespace tdmr {

inline constexpr const char* kVersion = "0.1.0";

}
