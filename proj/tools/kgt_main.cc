/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt_main.cc
 * @brief `kgt` command-line entry point.
 */
#include <iostream>
#include <string>
#include <vector>

#include "kgt/cli.hpp"

int main(int argc, char** argv) {
  return kgt::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
