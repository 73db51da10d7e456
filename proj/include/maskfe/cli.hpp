// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace maskfe {

// Command-line entry point. Returns the process exit code:
//   0  success
//   1  usage or configuration error (bad flags, bad config, failed gradcheck)
//   2  runtime failure (I/O errors, numerical failures)
int run_cli(int argc, char** argv);

// Same, for in-process tests; args excludes the program name.
int run_cli(const std::vector<std::string>& args);

}  // namespace maskfe
