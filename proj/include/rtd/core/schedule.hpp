#pragma once

#include <cstdint>

namespace rtd {

// Linear warmup 0 -> peak over `warmup` steps, then linear decay to 0 at `total`.
double lr_at(std::int64_t step, double peak, std::int64_t warmup, std::int64_t total);

}  // namespace rtd
