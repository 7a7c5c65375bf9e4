#pragma once

namespace softrecon {

inline constexpr const char* kVersion = "0.1.0";

// Version stamped into every serialized file (models, norm stats, uv tables,
// scenarios, manifests). Readers reject anything else.
inline constexpr int kFormatVersion = 1;

}  // namespace softrecon
