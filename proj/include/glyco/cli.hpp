#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace glyco {

/// Runs one subcommand. Exit codes: 0 success, 1 runtime error, 2 invalid
/// usage, config or data.
int cli(int argc, const char* const* argv);
int cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace glyco
