/**
 *  Copyright (c) 2026 by Contributors
 * @file kgt/cli.hpp
 * @brief Command-line front end.
 */
#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace kgt {

/// Exit codes: 0 success, 1 runtime failure or failed check, 2 usage or
/// configuration error, 3 missing artifact.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace kgt
