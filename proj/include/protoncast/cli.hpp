#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace protoncast {

// Entry point of the `protoncast` tool. `args` excludes the program name.
// Returns 0 on success, 1 for validation errors, 2 for runtime failures.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace protoncast
