#pragma once

#include <string>

namespace grs {

/// `%.*g` with the given number of significant digits.
std::string format_sig(double x, int digits = 6);

/// Fraction rendered as a percentage with two decimals, e.g. 0.0542 -> "5.42%".
std::string format_percent(double fraction);

/// Shortest `%g` rendering used for alpha column names, e.g. 0.05 -> "0.05".
std::string format_alpha(double alpha);

} // namespace grs
