#include "pfq/parallel.hpp"

#include <cstdlib>
#include <string>

namespace pfq {

std::size_t default_workers()
{
    if (const char* env = std::getenv("PFQ_WORKERS")) {
        try {
            const long v = std::stol(env);
            if (v > 0) return static_cast<std::size_t>(v);
        } catch (const std::exception&) {
        }
    }
    return 1;
}

} // namespace pfq
