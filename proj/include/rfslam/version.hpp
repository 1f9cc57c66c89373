#pragma once

namespace rfslam {

inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace rfslam
