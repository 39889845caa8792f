#include "lobdiff/data/orderbook.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <string>
#include <string_view>

#include <spdlog/spdlog.h>

namespace lobdiff {
namespace {

constexpr std::size_t kBookColumns = 4 * kBookDepth;

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, comma - start)));
    start = comma + 1;
  }
  return out;
}

// nullopt = missing field; throws on garbage.
std::optional<double> parse_field(std::string_view token, std::size_t row) {
  if (token.empty() || token == "nan" || token == "NaN" || token == "NAN") return std::nullopt;
  double value = 0.0;
  const char* first = token.data();
  const char* last = token.data() + token.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ParseError("non-numeric field '" + std::string(token) + "'", row);
  }
  if (std::isnan(value)) return std::nullopt;
  return value;
}

std::fstream open_or_throw(const std::filesystem::path& path) {
  std::fstream in(path, std::ios::in);
  if (!in) throw Error("cannot open " + path.string());
  return in;
}

}  // namespace

bool is_consistent(const RawBookEvent& e) {
  std::optional<double> prev_ask;
  std::optional<double> prev_bid;
  for (int k = 0; k < kBookDepth; ++k) {
    if (!(e.ask_size[k] >= 0.0) || !(e.bid_size[k] >= 0.0)) return false;
    if (e.ask_size[k] > 0.0) {
      if (prev_ask && !(e.ask_price[k] > *prev_ask)) return false;
      prev_ask = e.ask_price[k];
    }
    if (e.bid_size[k] > 0.0) {
      if (prev_bid && !(e.bid_price[k] < *prev_bid)) return false;
      prev_bid = e.bid_price[k];
    }
  }
  if (e.ask_size[0] > 0.0 && e.bid_size[0] > 0.0 && !(e.ask_price[0] > e.bid_price[0])) return false;
  return true;
}

ParseResult parse_orderbook(std::istream& book, std::istream* messages) {
  ParseResult result;
  const std::size_t expected = messages ? kBookColumns : kBookColumns + 1;
  double last_time = -std::numeric_limits<double>::infinity();
  std::string line;
  std::string message_line;
  std::size_t row = 0;

  while (std::getline(book, line)) {
    ++row;
    if (trim(line).empty()) continue;
    ++result.rows_read;

    std::optional<double> time;
    if (messages) {
      if (!std::getline(*messages, message_line)) {
        throw ParseError("message file has fewer rows than the book file", row);
      }
      const auto msg_fields = split_csv(message_line);
      time = parse_field(msg_fields.front(), row);
    }

    const auto fields = split_csv(line);
    if (fields.size() != expected) {
      throw ParseError("expected " + std::to_string(expected) + " columns, found " +
                           std::to_string(fields.size()),
                       row);
    }

    std::size_t offset = 0;
    if (!messages) {
      time = parse_field(fields[0], row);
      offset = 1;
    }

    bool missing = !time.has_value();
    RawBookEvent event;
    for (int k = 0; k < kBookDepth; ++k) {
      const std::size_t base = offset + 4 * static_cast<std::size_t>(k);
      const auto ap = parse_field(fields[base + 0], row);
      const auto as = parse_field(fields[base + 1], row);
      const auto bp = parse_field(fields[base + 2], row);
      const auto bs = parse_field(fields[base + 3], row);
      if (!ap || !as || !bp || !bs) {
        missing = true;
        continue;
      }
      event.ask_price[k] = *ap;
      event.ask_size[k] = *as;
      event.bid_price[k] = *bp;
      event.bid_size[k] = *bs;
    }

    if (time) {
      if (*time < last_time) {
        throw ParseError("timestamps out of order (" + std::to_string(*time) + " after " +
                             std::to_string(last_time) + ")",
                         row);
      }
      last_time = *time;
    }

    if (missing) {
      ++result.skipped_missing;
      continue;
    }
    event.time_of_day = *time;
    if (!is_consistent(event)) {
      ++result.skipped_invalid;
      continue;
    }
    result.events.push_back(event);
  }

  if (result.skipped_missing + result.skipped_invalid > 0) {
    spdlog::warn("parse_orderbook: skipped {} rows with missing fields and {} inconsistent rows",
                 result.skipped_missing, result.skipped_invalid);
  }
  return result;
}

ParseResult parse_orderbook(const std::filesystem::path& book_file,
                            const std::filesystem::path& message_file) {
  auto book = open_or_throw(book_file);
  auto messages = open_or_throw(message_file);
  return parse_orderbook(book, &messages);
}

ParseResult parse_orderbook(const std::filesystem::path& book_file) {
  auto book = open_or_throw(book_file);
  return parse_orderbook(book, nullptr);
}

}  // namespace lobdiff
