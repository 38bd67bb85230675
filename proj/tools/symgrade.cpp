// SPDX-License-Identifier: Apache-2.0
#include "symgrade/cli.hpp"

int main(int argc, char** argv) { return symgrade::cli::run(argc, argv); }
