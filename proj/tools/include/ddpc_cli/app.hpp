#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ddpc::cli {

/// Entry point of the `ddpc` tool. Returns 0 on success, 1 when a row or check failed
/// and 2 on usage or configuration errors.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ddpc::cli
