#pragma once

#include <chrono>
#include <optional>
#include <string>
#include <string_view>

namespace protoncast {

using Instant = std::chrono::sys_seconds;
using Seconds = std::chrono::seconds;

// Fixed sampling interval of every flux channel.
inline constexpr Seconds kCadence{300};

// Accepts `YYYY-MM-DDTHH:MM[:SS]` with an optional trailing `Z`.
std::optional<Instant> parse_instant(std::string_view text);

// Always emits `YYYY-MM-DDTHH:MM:SSZ`.
std::string format_instant(Instant t);

}  // namespace protoncast
