#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace couple::cli {

// Runs one command. `args` excludes the program name. Returns 0 on success,
// 1 on validation or configuration errors, 2 on I/O errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace couple::cli
