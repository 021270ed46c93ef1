#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <string>

namespace segserve {

// Milliseconds since the Unix epoch, UTC.
using TimestampMs = std::int64_t;

using Clock = std::function<TimestampMs()>;

TimestampMs system_now_ms();
Clock system_clock();

// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_utc(TimestampMs t);

} // namespace segserve
