#include "cadiff/threadpool.hpp"

#include <cstdlib>
#include <string>

namespace cadiff {

int resolve_threads(int requested) {
    int n = requested > 0 ? requested : static_cast<int>(std::thread::hardware_concurrency());
    if (n < 1) n = 1;
    if (const char* cap = std::getenv("CADIFF_THREADS")) {
        try {
            const int c = std::stoi(cap);
            if (c >= 1 && c < n) n = c;
        } catch (...) {
            // Unparseable cap is ignored rather than fatal.
        }
    }
    return n;
}

}  // namespace cadiff
