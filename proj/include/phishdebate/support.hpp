#pragma once

#include <cctype>
#include <chrono>
#include <cstdint>
#include <mutex>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

namespace phishdebate {

// Injectable time source. Retry and rate-limit behavior is driven entirely
// through this interface so it can be tested without real waiting.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::chrono::milliseconds now() = 0;
  virtual void sleep_for(std::chrono::milliseconds d) = 0;
};

class SystemClock final : public Clock {
 public:
  std::chrono::milliseconds now() override {
    return std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::system_clock::now().time_since_epoch());
  }
  void sleep_for(std::chrono::milliseconds d) override {
    std::this_thread::sleep_for(d);
  }
};

// Deterministic clock: time advances only through sleep_for. Sleeps are
// recorded so tests can assert on backoff schedules.
class LogicalClock final : public Clock {
 public:
  std::chrono::milliseconds now() override {
    std::scoped_lock lock(mutex_);
    return t_;
  }

  void sleep_for(std::chrono::milliseconds d) override {
    std::scoped_lock lock(mutex_);
    t_ += d;
    sleeps_.push_back(d);
  }

  std::vector<std::chrono::milliseconds> sleeps() const {
    std::scoped_lock lock(mutex_);
    return sleeps_;
  }

 private:
  mutable std::mutex mutex_;
  std::chrono::milliseconds t_{0};
  std::vector<std::chrono::milliseconds> sleeps_;
};

inline std::uint64_t fnv1a64(std::string_view data) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

inline std::string fnv1a64_hex(std::string_view data) {
  static constexpr char digits[] = "0123456789abcdef";
  std::uint64_t h = fnv1a64(data);
  std::string out(16, '0');
  for (int i = 15; i >= 0; --i) {
    out[static_cast<std::size_t>(i)] = digits[h & 0xf];
    h >>= 4;
  }
  return out;
}

inline std::string to_lower_copy(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (unsigned char c : s) {
    out.push_back(static_cast<char>(std::tolower(c)));
  }
  return out;
}

inline std::string trim_copy(std::string_view s) {
  std::size_t begin = 0;
  std::size_t end = s.size();
  while (begin < end && std::isspace(static_cast<unsigned char>(s[begin]))) ++begin;
  while (end > begin && std::isspace(static_cast<unsigned char>(s[end - 1]))) --end;
  return std::string(s.substr(begin, end - begin));
}

}  // namespace phishdebate
