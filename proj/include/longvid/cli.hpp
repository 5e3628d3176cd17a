#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace longvid {

// Runs one command line (arguments only, no program name). Results go to
// out, diagnostics to err. Returns the process exit code: 0 success,
// 1 runtime failure, 2 usage error.
int cmd_dispatch(const std::vector<std::string>& args, std::ostream& out,
                 std::ostream& err);

}  // namespace longvid
