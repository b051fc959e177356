#pragma once

#include <string>
#include <vector>

namespace psdisc {

// Exit codes: 0 success, 1 usage/validation error, 2 numeric failure.
int cli_dispatch(int argc, const char* const* argv);
int cli_dispatch(const std::vector<std::string>& args);  // without argv[0]

}  // namespace psdisc
