#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

namespace wingpt::cli {

inline constexpr std::string_view kVersion = "0.1.0";

// Exit codes: 0 success, 1 validation or runtime failure, 2 usage error.
// Data goes to files named on the command line; `out` only carries help text
// and `err` carries one JSON log object per line.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv);

}  // namespace wingpt::cli
