#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dsakv::cli {

enum ExitCode : int { ok = 0, io_error = 1, semantic_error = 2 };

/// Runs one `dsa-kv` invocation. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dsakv::cli
