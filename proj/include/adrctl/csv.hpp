#pragma once

// CSV and numeric formatting shared by the file interfaces. Every number is
// written as the shortest decimal that round-trips to the same double.

#include <iosfwd>
#include <string>
#include <vector>

#include "adrctl/grid.hpp"

namespace adrctl {

std::string format_double(double value);
double parse_double(const std::string& text);

/// Splits one CSV line on commas; surrounding whitespace is trimmed.
std::vector<std::string> split_csv_line(const std::string& line);

/// Rows "t,cell,value" for one snapshot of a scalar field.
void write_snapshot_rows(std::ostream& out, double t, const ScalarField& y);

/// Reads a single column of cell values (one per line, or "cell,value"
/// rows). Lines starting with '#' and a non-numeric header are skipped.
std::vector<double> read_tabulated_values(std::istream& in);

}  // namespace adrctl
