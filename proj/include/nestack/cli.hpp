#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace nestack::cli {

/// Exit codes: 0 success, 2 invalid input, 3 numeric degeneracy.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitDegenerate = 3;

/// Runs one invocation. `args` excludes the program name. JSON goes to
/// `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace nestack::cli
