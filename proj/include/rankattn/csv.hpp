#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace rankattn {

// Shortest form that round-trips: 17 significant digits.
std::string fmt17(double x);

void write_csv_row(std::ostream& os, const std::vector<std::string>& fields);

}  // namespace rankattn
