// SPDX-License-Identifier: Apache-2.0
#include "tokimp/record_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "tokimp/error.hpp"

namespace tokimp::io {

using nlohmann::json;

namespace {

std::string at_line(std::size_t line) { return "line " + std::to_string(line) + ": "; }

std::vector<double> read_array(const json& obj, const char* key, std::size_t vocab,
                               std::size_t line) {
  const auto it = obj.find(key);
  if (it == obj.end() || !it->is_array()) {
    fail(ErrorKind::Schema, at_line(line) + "missing array '" + key + "'");
  }
  if (it->size() != vocab) {
    fail(ErrorKind::Schema, at_line(line) + "'" + key + "' has " + std::to_string(it->size()) +
                                " entries, header declares vocab_size " + std::to_string(vocab));
  }
  std::vector<double> out;
  out.reserve(vocab);
  for (const auto& v : *it) {
    if (!v.is_number()) fail(ErrorKind::Schema, at_line(line) + "non-numeric entry in " + key);
    out.push_back(v.get<double>());
  }
  return out;
}

ProbDist decode(std::vector<double> values, Encoding enc, std::size_t line, std::size_t position,
                const char* which) {
  const std::string where = at_line(line) + "position " + std::to_string(position) + " " + which;
  try {
    switch (enc) {
      case Encoding::Probs:
        return ProbDist(std::move(values));
      case Encoding::LogProbs: {
        double sum = 0.0;
        for (double& v : values) {
          if (std::isnan(v) || v > 0.0) fail(ErrorKind::Validation, "log-probability above 0");
          v = std::exp(v);
          sum += v;
        }
        if (std::abs(sum - 1.0) > kSumTolerance) {
          fail(ErrorKind::Validation, "probabilities sum to " + std::to_string(sum));
        }
        for (double& v : values) v /= sum;
        return ProbDist(std::move(values));
      }
      case Encoding::Logits:
        return softmax(values);
    }
  } catch (const Error& e) {
    const auto kind = e.kind() == ErrorKind::InvalidInput ? ErrorKind::Validation : e.kind();
    throw Error(kind, where + ": " + e.what());
  }
  fail(ErrorKind::Schema, where + ": unknown encoding");
}

}  // namespace

const char* to_string(Encoding e) noexcept {
  switch (e) {
    case Encoding::Probs: return "probs";
    case Encoding::LogProbs: return "logprobs";
    case Encoding::Logits: return "logits";
  }
  return "?";
}

RecordReader::RecordReader(std::istream& in) : in_(in) {
  std::string text;
  while (text.empty()) {
    if (!std::getline(in_, text)) fail(ErrorKind::Schema, "missing header line");
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) text.clear();
  }
  json h;
  try {
    h = json::parse(text);
  } catch (const json::exception& e) {
    fail(ErrorKind::Parse, at_line(line_) + "header is not valid JSON: " + e.what());
  }
  if (!h.is_object() || h.value("format", "") != kFormatName) {
    fail(ErrorKind::Schema, at_line(line_) + "header must declare format \"" +
                                std::string(kFormatName) + "\"");
  }
  if (!h.contains("version") || !h["version"].is_number_integer() ||
      h["version"].get<int>() != kFormatVersion) {
    fail(ErrorKind::Schema, at_line(line_) + "unsupported format version");
  }
  if (!h.contains("vocab_size") || !h["vocab_size"].is_number_unsigned() ||
      h["vocab_size"].get<std::size_t>() < 2) {
    fail(ErrorKind::Schema, at_line(line_) + "vocab_size must be an integer >= 2");
  }
  header_.vocab_size = h["vocab_size"].get<std::size_t>();
  const std::string enc = h.value("encoding", "probs");
  if (enc == "probs") {
    header_.encoding = Encoding::Probs;
  } else if (enc == "logprobs") {
    header_.encoding = Encoding::LogProbs;
  } else if (enc == "logits") {
    header_.encoding = Encoding::Logits;
  } else {
    fail(ErrorKind::Schema, at_line(line_) + "unknown encoding '" + enc + "'");
  }
}

std::optional<TokenRecord> RecordReader::read_line() {
  std::string text;
  while (std::getline(in_, text)) {
    ++line_;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json obj;
    try {
      obj = json::parse(text);
    } catch (const json::exception& e) {
      fail(ErrorKind::Parse, at_line(line_) + "malformed record: " + e.what());
    }
    if (!obj.is_object()) fail(ErrorKind::Parse, at_line(line_) + "record is not a JSON object");
    for (const char* key : {"position", "sampled_token"}) {
      if (!obj.contains(key) || !obj[key].is_number_unsigned()) {
        fail(ErrorKind::Schema, at_line(line_) + "'" + key + "' must be a non-negative integer");
      }
    }
    TokenRecord r{obj["position"].get<std::size_t>(),
                  decode(read_array(obj, "student", header_.vocab_size, line_), header_.encoding,
                         line_, obj["position"].get<std::size_t>(), "student"),
                  decode(read_array(obj, "teacher", header_.vocab_size, line_), header_.encoding,
                         line_, obj["position"].get<std::size_t>(), "teacher"),
                  obj["sampled_token"].get<std::size_t>(),
                  std::nullopt};
    if (const auto it = obj.find("rollout_id"); it != obj.end() && !it->is_null()) {
      if (it->is_string()) {
        r.rollout_id = it->get<std::string>();
      } else if (it->is_number_integer()) {
        r.rollout_id = std::to_string(it->get<long long>());
      } else {
        fail(ErrorKind::Schema, at_line(line_) + "rollout_id must be a string or integer");
      }
    }
    if (r.sampled_token >= header_.vocab_size) {
      fail(ErrorKind::Validation, at_line(line_) + "sampled_token out of range");
    }
    return r;
  }
  return std::nullopt;
}

std::optional<TokenRecord> RecordReader::next() {
  if (pending_) {
    auto r = std::move(pending_);
    pending_.reset();
    return r;
  }
  return read_line();
}

std::optional<std::vector<TokenRecord>> RecordReader::next_batch(bool group_by_rollout) {
  std::vector<TokenRecord> batch;
  while (auto r = next()) {
    if (group_by_rollout) {
      if (!r->rollout_id) {
        fail(ErrorKind::Schema, at_line(line_) + "record has no rollout_id to batch by");
      }
      if (finished_rollouts_.count(*r->rollout_id) != 0) {
        fail(ErrorKind::Schema, at_line(line_) + "rollout_id '" + *r->rollout_id +
                                    "' reappears after its records ended");
      }
      if (!batch.empty() && *batch.front().rollout_id != *r->rollout_id) {
        finished_rollouts_.insert(*batch.front().rollout_id);
        pending_ = std::move(r);
        return batch;
      }
    }
    batch.push_back(std::move(*r));
  }
  if (batch.empty()) return std::nullopt;
  if (group_by_rollout) finished_rollouts_.insert(*batch.front().rollout_id);
  return batch;
}

std::vector<TokenRecord> parse_records(std::istream& in) {
  RecordReader reader(in);
  std::vector<TokenRecord> out;
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_records(std::ostream& out, std::span<const TokenRecord> records) {
  const std::size_t vocab = records.empty() ? 2 : records.front().student.vocab_size();
  out << "{\"format\":\"" << kFormatName << "\",\"version\":" << kFormatVersion
      << ",\"vocab_size\":" << vocab << ",\"encoding\":\"probs\"}\n";
  auto write_array = [&out](const ProbDist& p) {
    out << '[';
    for (std::size_t i = 0; i < p.vocab_size(); ++i) {
      if (i) out << ',';
      out << format_double(p[i]);
    }
    out << ']';
  };
  for (const auto& r : records) {
    if (r.student.vocab_size() != vocab || r.teacher.vocab_size() != vocab) {
      fail(ErrorKind::Dimension, "records disagree on vocab size");
    }
    out << "{\"position\":" << r.position;
    if (r.rollout_id) out << ",\"rollout_id\":" << json(*r.rollout_id).dump();
    out << ",\"sampled_token\":" << r.sampled_token << ",\"student\":";
    write_array(r.student);
    out << ",\"teacher\":";
    write_array(r.teacher);
    out << "}\n";
  }
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::Io, "cannot write " + tmp);
    out << contents;
    out.flush();
    if (!out) fail(ErrorKind::Io, "write failed for " + tmp);
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    fail(ErrorKind::Io, "cannot rename into " + path);
  }
}

}  // namespace tokimp::io
