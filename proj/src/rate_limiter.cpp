#include "anchorlab/rate_limiter.hpp"

#include <algorithm>
#include <thread>

#include "anchorlab/error.hpp"

namespace anchorlab::backend {

RateLimiter::RateLimiter(double requests_per_minute, double burst)
    : rate_(requests_per_minute), burst_(burst), tokens_(burst), last_(clock::now()) {
  if (!(burst >= 1.0)) throw Error(Errc::invalid_config, "rate limiter burst must be >= 1");
}

void RateLimiter::acquire() {
  if (rate_ <= 0) return;
  // The lock is held while waiting so admissions stay serialized and FIFO-ish.
  std::lock_guard lock(mutex_);
  const double per_second = rate_ / 60.0;
  auto refill = [&] {
    const auto now = clock::now();
    tokens_ = std::min(burst_, tokens_ + std::chrono::duration<double>(now - last_).count() * per_second);
    last_ = now;
  };
  refill();
  if (tokens_ < 1.0) {
    std::this_thread::sleep_for(std::chrono::duration<double>((1.0 - tokens_) / per_second));
    refill();
  }
  tokens_ = std::max(0.0, tokens_ - 1.0);
}

}  // namespace anchorlab::backend
