#include "rtd/core/schedule.hpp"

#include <string>

#include "rtd/core/errors.hpp"

namespace rtd {

double lr_at(std::int64_t step, double peak, std::int64_t warmup, std::int64_t total) {
  RTD_REQUIRE(warmup > 0 && warmup < total, "lr_at: need 0 < warmup < total");
  RTD_REQUIRE(step >= 0 && step <= total,
              "lr_at: step " + std::to_string(step) + " outside [0, " + std::to_string(total) + "]");
  if (step <= warmup) return peak * static_cast<double>(step) / static_cast<double>(warmup);
  return peak * static_cast<double>(total - step) / static_cast<double>(total - warmup);
}

}  // namespace rtd
