#pragma once

#include <iostream>

namespace lexrl {

/// Entry point of the lexrl binary. Exit codes: 0 success, 1 usage,
/// 2 config error, 3 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace lexrl
