#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rankattn {

// Exit codes: 0 success or within band, 1 outside band, 2 invalid parameters,
// 3 quadrature tolerance failure, 4 training divergence, 5 any other failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace rankattn
