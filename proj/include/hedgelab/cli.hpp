#pragma once

#include <ostream>

namespace hedgelab::cli {

// Exit codes: 0 success, 2 validation error (bad flags or config), 1 runtime
// failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitRuntime = 1;
inline constexpr int kExitValidation = 2;

int run(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace hedgelab::cli
