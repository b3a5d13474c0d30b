#include "grs/format.hpp"

#include <cstdio>

namespace grs {

std::string format_sig(double x, int digits) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", digits, x);
    return buf;
}

std::string format_percent(double fraction) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.2f%%", fraction * 100.0);
    return buf;
}

std::string format_alpha(double alpha) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%g", alpha);
    return buf;
}

} // namespace grs
