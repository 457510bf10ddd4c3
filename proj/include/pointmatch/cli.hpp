#pragma once

#include <optional>
#include <ostream>
#include <string>

#include "pointmatch/geometry.hpp"

namespace pointmatch {

// Exit codes: 0 success, 1 load or search failure, 2 usage error.
int run_cli(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

// "x,y,z" with exactly three finite reals.
std::optional<WorldPoint> parse_point_arg(const std::string &text);

} // namespace pointmatch
