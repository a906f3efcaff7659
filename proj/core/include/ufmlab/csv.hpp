#pragma once

#include <span>
#include <string>
#include <vector>

namespace ufm::csv {

/// Round-trippable decimal (%.17g); +inf is written as "inf", NaN as "nan".
std::string format(double value);

std::string join(std::span<const std::string> cells);
std::string row(std::span<const double> values);

/// Minimal reader for the files this project writes: comma-separated, no
/// quoting.  Returns rows of cells including the header row.
std::vector<std::vector<std::string>> parse(const std::string& text);

}  // namespace ufm::csv
