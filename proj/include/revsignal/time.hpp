#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace revsignal {

/// UTC instant at millisecond resolution.
using Instant = std::chrono::sys_time<std::chrono::milliseconds>;

/// Parses ISO-8601 and Gerrit-style timestamps:
///   2013-04-05T10:11:12Z, 2013-04-05 10:11:12.123000000,
///   2013-04-05T12:11:12+02:00
/// A missing zone designator means UTC. Throws InputError on malformed text.
Instant parse_instant(std::string_view text);

/// Canonical form: YYYY-MM-DDTHH:MM:SSZ, with a .mmm fraction only when the
/// instant is not on a whole second.
std::string format_instant(Instant t);

}  // namespace revsignal
