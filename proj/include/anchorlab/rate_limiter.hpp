#pragma once

#include <chrono>
#include <mutex>

namespace anchorlab::backend {

// Token bucket in requests per minute. acquire() blocks until a token is
// available; callers are admitted one at a time. A rate <= 0 disables limiting.
class RateLimiter {
 public:
  explicit RateLimiter(double requests_per_minute, double burst = 1.0);

  void acquire();
  double rate_per_minute() const noexcept { return rate_; }

 private:
  using clock = std::chrono::steady_clock;

  std::mutex mutex_;
  double rate_;
  double burst_;
  double tokens_;
  clock::time_point last_;
};

}  // namespace anchorlab::backend
