#include "revsignal/time.hpp"

#include <cctype>
#include <cstdio>

#include "revsignal/errors.hpp"

namespace revsignal {

namespace {

int read_digits(std::string_view text, std::size_t& pos, std::size_t count) {
  if (pos + count > text.size()) {
    throw InputError("truncated timestamp: '" + std::string(text) + "'");
  }
  int value = 0;
  for (std::size_t i = 0; i < count; ++i) {
    const char c = text[pos + i];
    if (!std::isdigit(static_cast<unsigned char>(c))) {
      throw InputError("malformed timestamp: '" + std::string(text) + "'");
    }
    value = value * 10 + (c - '0');
  }
  pos += count;
  return value;
}

void expect(std::string_view text, std::size_t& pos, char c) {
  if (pos >= text.size() || text[pos] != c) {
    throw InputError("malformed timestamp: '" + std::string(text) + "'");
  }
  ++pos;
}

}  // namespace

Instant parse_instant(std::string_view text) {
  using namespace std::chrono;
  std::size_t pos = 0;
  const int y = read_digits(text, pos, 4);
  expect(text, pos, '-');
  const int mo = read_digits(text, pos, 2);
  expect(text, pos, '-');
  const int d = read_digits(text, pos, 2);
  if (pos >= text.size() || (text[pos] != 'T' && text[pos] != ' ')) {
    throw InputError("malformed timestamp: '" + std::string(text) + "'");
  }
  ++pos;
  const int hh = read_digits(text, pos, 2);
  expect(text, pos, ':');
  const int mm = read_digits(text, pos, 2);
  expect(text, pos, ':');
  const int ss = read_digits(text, pos, 2);

  int millis = 0;
  if (pos < text.size() && text[pos] == '.') {
    ++pos;
    int digits = 0;
    while (pos < text.size() && std::isdigit(static_cast<unsigned char>(text[pos]))) {
      if (digits < 3) millis = millis * 10 + (text[pos] - '0');
      ++digits;
      ++pos;
    }
    if (digits == 0) {
      throw InputError("malformed timestamp: '" + std::string(text) + "'");
    }
    for (int i = digits; i < 3; ++i) millis *= 10;
  }

  minutes offset{0};
  if (pos < text.size()) {
    const char z = text[pos];
    if (z == 'Z' || z == 'z') {
      ++pos;
    } else if (z == '+' || z == '-') {
      ++pos;
      const int oh = read_digits(text, pos, 2);
      if (pos < text.size() && text[pos] == ':') ++pos;
      const int om = read_digits(text, pos, 2);
      offset = hours{oh} + minutes{om};
      if (z == '-') offset = -offset;
    }
  }
  if (pos != text.size()) {
    throw InputError("malformed timestamp: '" + std::string(text) + "'");
  }

  const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                           day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) {
    throw InputError("invalid timestamp: '" + std::string(text) + "'");
  }
  const auto local = sys_days{ymd} + hours{hh} + minutes{mm} + seconds{ss} +
                     milliseconds{millis};
  return time_point_cast<milliseconds>(local - offset);
}

std::string format_instant(Instant t) {
  using namespace std::chrono;
  const auto day_point = floor<days>(t);
  const year_month_day ymd{day_point};
  const hh_mm_ss<milliseconds> tod{t - day_point};
  char buf[40];
  const auto ms = tod.subseconds().count();
  if (ms == 0) {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(tod.hours().count()),
                  static_cast<long>(tod.minutes().count()),
                  static_cast<long>(tod.seconds().count()));
  } else {
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ld.%03ldZ",
                  static_cast<int>(ymd.year()), static_cast<unsigned>(ymd.month()),
                  static_cast<unsigned>(ymd.day()), static_cast<long>(tod.hours().count()),
                  static_cast<long>(tod.minutes().count()),
                  static_cast<long>(tod.seconds().count()), static_cast<long>(ms));
  }
  return buf;
}

}  // namespace revsignal
