#include "sctransnet/common.hpp"

#include <cstdio>

namespace scnet {

std::string to_hex(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return std::string(buf);
}

std::string format_double(double v) {
    char buf[40];
    // %.17g always round-trips; prefer the shortest representation that does
    for (int prec = 15; prec <= 17; ++prec) {
        std::snprintf(buf, sizeof(buf), "%.*g", prec, v);
        double back = 0.0;
        std::sscanf(buf, "%lf", &back);
        if (back == v || (v != v && back != back)) return std::string(buf);
    }
    return std::string(buf);
}

}  // namespace scnet
