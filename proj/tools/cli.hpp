#pragma once

#include <iosfwd>

namespace stackprice::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitDomain = 1;
inline constexpr int kExitUsage = 2;

/// Environment variable naming the root for default output locations.
inline constexpr const char* kOutputRootEnv = "STACKPRICE_OUTPUT_ROOT";

/// Parses argv and runs one subcommand. Never throws.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace stackprice::cli
