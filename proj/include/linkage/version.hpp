#pragma once

namespace linkage {

inline constexpr const char* kArtifactVersion = "0.1.0";

} // namespace linkage
