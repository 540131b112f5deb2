// SPDX-License-Identifier: Apache-2.0
#pragma once

/**
 * @file record_io.hpp
 * @brief Line-delimited record files.
 *
 * Line 1 is a JSON header:
 *   {"format":"tokimp-records","version":1,"vocab_size":V,"encoding":"probs"}
 * encoding is one of probs | logprobs | logits. Each following non-empty
 * line is one JSON object:
 *   {"position":0,"rollout_id":"r0","sampled_token":3,"student":[...],"teacher":[...]}
 * rollout_id is optional. Arrays are dense with exactly vocab_size entries.
 */

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "tokimp/dist_metrics.hpp"

namespace tokimp::io {

inline constexpr int kFormatVersion = 1;
inline constexpr const char* kFormatName = "tokimp-records";

enum class Encoding { Probs, LogProbs, Logits };

const char* to_string(Encoding e) noexcept;

struct RecordHeader {
  int version = kFormatVersion;
  std::size_t vocab_size = 0;
  Encoding encoding = Encoding::Probs;
};

/// Single-pass reader; holds at most one batch in memory.
class RecordReader {
 public:
  /// Reads and validates the header. The stream must outlive the reader.
  explicit RecordReader(std::istream& in);

  const RecordHeader& header() const noexcept { return header_; }

  /// Next record in file order, or nullopt at end of input.
  std::optional<TokenRecord> next();

  /// With group_by_rollout off, the whole remaining file is one batch.
  /// Otherwise each maximal run of equal rollout_id values is a batch;
  /// a missing rollout_id or an id that reappears after its run is a
  /// schema error.
  std::optional<std::vector<TokenRecord>> next_batch(bool group_by_rollout);

  std::size_t line_number() const noexcept { return line_; }

 private:
  std::optional<TokenRecord> read_line();

  std::istream& in_;
  RecordHeader header_;
  std::size_t line_ = 0;
  std::optional<TokenRecord> pending_;
  std::set<std::string> finished_rollouts_;
};

/// Whole-stream convenience wrapper around RecordReader.
std::vector<TokenRecord> parse_records(std::istream& in);

/// Writes a probs-encoded file with every value at 17 significant digits.
void write_records(std::ostream& out, std::span<const TokenRecord> records);

/// printf("%.17g").
std::string format_double(double v);

/// Writes via a temporary sibling and renames over `path` on success.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace tokimp::io
