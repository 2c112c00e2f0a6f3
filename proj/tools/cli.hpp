#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace eivlg::cli {

/// Runs the command line in-process and returns the exit code
/// (0 ok, 1 usage, 2 data, 3 numeric).
int Run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace eivlg::cli
