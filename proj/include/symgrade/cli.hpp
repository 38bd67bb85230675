// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace symgrade::cli {

/// Process exit codes; part of the command-line contract.
enum ExitCode : int {
    kOk = 0,
    kIoError = 1,
    kUsage = 2,
    kDivergence = 3,
    kCheckpointFormat = 4,
    kGradCheckFailed = 5,
};

/// Runs one subcommand (generate | train | eval | gradcheck | predict).
/// `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, char** argv);

} // namespace symgrade::cli
