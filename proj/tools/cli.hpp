#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace fieldloom::cli {

/// Runs exactly one subcommand. Returns 0 on success, 1 on usage errors,
/// 2 on data errors and 3 on numeric failures.
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
// `args` excludes the program name.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fieldloom::cli
