#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace trafficview {

/// Seconds since the Unix epoch, UTC.
using Timestamp = std::int64_t;

/// FNV-1a over raw bytes; stable across platforms, used for seed derivation.
std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

/// SplitMix64 finalizer; mixes a 64-bit value into a well-distributed seed.
std::uint64_t mix64(std::uint64_t x);

namespace csv {

/// Splits one CSV line. Supports double-quoted fields with "" escapes.
std::vector<std::string> split_line(std::string_view line);

/// Quotes a field when it contains a comma, quote or newline.
std::string escape(std::string_view field);

std::string join(const std::vector<std::string>& fields);

/// Reads a whole CSV file. The first row must equal `expected_header`
/// exactly (column names, in order). Blank lines are ignored.
std::vector<std::vector<std::string>> read_file(const std::string& path,
                                                const std::vector<std::string>& expected_header);

}  // namespace csv

/// Shortest round-trippable decimal representation of `v`.
std::string format_double(double v);

/// Fixed-point rendering with `digits` decimals, no trailing-zero trimming.
std::string format_fixed(double v, int digits);

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);

/// Parses "YYYY-MM-DD" into days since 1970-01-01.
std::int64_t parse_date(std::string_view ymd);
std::string format_date(std::int64_t days_since_epoch);

/// Floor division of seconds into days, honoring negative timestamps.
std::int64_t floor_div(std::int64_t a, std::int64_t b);

/// 0 = Monday ... 6 = Sunday.
int day_of_week(std::int64_t days_since_epoch);

}  // namespace trafficview
