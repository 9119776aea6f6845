#pragma once

namespace coap {
inline constexpr const char* kVersion = "0.1.0";
}
