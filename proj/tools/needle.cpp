// SPDX-License-Identifier: Apache-2.0
// Copyright 2026 Needle Contributors

#include "needle/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return needle::cli::run(args);
}
