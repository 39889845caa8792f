#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <vector>

#include "lobdiff/common.hpp"

namespace lobdiff {

/// One order-book state as published in a LOBSTER-style snapshot file.
struct RawBookEvent {
  double time_of_day = 0.0;  // seconds after midnight
  std::array<double, kBookDepth> ask_price{};
  std::array<double, kBookDepth> ask_size{};
  std::array<double, kBookDepth> bid_price{};
  std::array<double, kBookDepth> bid_size{};
};

/// Checks the book invariants: non-negative sizes, asks strictly increasing and
/// bids strictly decreasing across populated levels, and an uncrossed top.
/// Levels with zero size are padding and are excluded from the price checks.
bool is_consistent(const RawBookEvent& event);

struct ParseResult {
  std::vector<RawBookEvent> events;
  std::size_t rows_read = 0;
  std::size_t skipped_missing = 0;   // a field was empty or NaN
  std::size_t skipped_invalid = 0;   // parsed but violated the book invariants
};

/// Reads a 40-column book file (per level: ask price, ask size, bid price, bid
/// size, level 1 first) with timestamps from the first column of a companion
/// message file, row-aligned. Throws ParseError on a malformed row and on
/// timestamps that go backwards.
ParseResult parse_orderbook(const std::filesystem::path& book_file,
                            const std::filesystem::path& message_file);

/// Same format with the timestamp embedded as an extra leading column (41 columns).
ParseResult parse_orderbook(const std::filesystem::path& book_file);

/// Stream form; `messages` may be null when timestamps are embedded.
ParseResult parse_orderbook(std::istream& book, std::istream* messages);

}  // namespace lobdiff
