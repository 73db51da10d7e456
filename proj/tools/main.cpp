// SPDX-License-Identifier: Apache-2.0
#include "maskfe/cli.hpp"

int main(int argc, char** argv) { return maskfe::run_cli(argc, argv); }
