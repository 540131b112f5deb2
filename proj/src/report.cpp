// SPDX-License-Identifier: Apache-2.0
#include "tokimp/report.hpp"

#include <filesystem>
#include <sstream>

#include <json.hpp>

#include "tokimp/error.hpp"
#include "tokimp/record_io.hpp"

namespace tokimp::io {

using nlohmann::ordered_json;

namespace {

const char* mode_name(QuadrantThresholds::Mode m) {
  return m == QuadrantThresholds::Mode::Fixed ? "fixed" : "median";
}

ordered_json mask_json(const std::string& label, const SelectionMask& m) {
  ordered_json j;
  j["batch"] = label;
  j["strategy"] = to_string(m.strategy);
  j["rho"] = m.rho;
  j["seed"] = m.seed ? ordered_json(*m.seed) : ordered_json(nullptr);
  j["total"] = m.total;
  j["retained"] = m.retained;
  return j;
}

}  // namespace

BatchAnalysis analyze_batch(std::span<const TokenRecord> batch, const QuadrantThresholds& th,
                            std::string label) {
  BatchAnalysis a;
  a.label = std::move(label);
  a.metrics = score_batch(batch);
  classify_batch(a.metrics, th);
  a.histogram = quadrant_histogram(a.metrics, th);
  a.teacher_entropy = teacher_entropy_stats(batch);
  return a;
}

std::string render_metrics_csv(std::span<const BatchAnalysis> batches) {
  std::ostringstream out;
  out << "batch,position,h,delta_rev,delta_fwd,h_hat,delta_hat,softor,q3_score,quadrant";
  const std::size_t n_masks = batches.empty() ? 0 : batches.front().masks.size();
  for (std::size_t k = 0; k < n_masks; ++k) {
    out << ",sel_" << to_string(batches.front().masks[k].strategy);
  }
  out << '\n';
  for (const auto& b : batches) {
    if (b.masks.size() != n_masks) fail(ErrorKind::InvalidInput, "batches carry different masks");
    std::vector<std::vector<char>> flags(n_masks, std::vector<char>(b.metrics.size(), 0));
    for (std::size_t k = 0; k < n_masks; ++k) {
      for (std::size_t t : b.masks[k].retained) flags[k].at(t) = 1;
    }
    for (std::size_t t = 0; t < b.metrics.size(); ++t) {
      const auto& m = b.metrics[t];
      out << b.label << ',' << m.position << ',' << format_double(m.h) << ','
          << format_double(m.delta_rev) << ',' << format_double(m.delta_fwd) << ','
          << format_double(m.h_hat) << ',' << format_double(m.delta_hat) << ','
          << format_double(m.softor) << ',' << format_double(m.q3_score) << ','
          << (m.quadrant ? to_string(*m.quadrant) : "");
      for (std::size_t k = 0; k < n_masks; ++k) out << ',' << int(flags[k][t]);
      out << '\n';
    }
  }
  return out.str();
}

std::string render_summary(std::span<const BatchAnalysis> batches) {
  ordered_json root;
  root["format"] = "tokimp-summary";
  root["version"] = 1;
  root["batches"] = ordered_json::array();
  for (const auto& b : batches) {
    ordered_json j;
    j["batch"] = b.label;
    j["tokens"] = b.metrics.size();
    const auto& th = b.histogram.thresholds;
    j["thresholds"] = {{"mode", mode_name(th.mode)}, {"tau_h", th.tau_h}, {"tau_d", th.tau_d}};
    ordered_json q;
    for (std::size_t i = 0; i < 4; ++i) {
      q[to_string(static_cast<Quadrant>(i))] = {{"count", b.histogram.counts[i]},
                                                {"fraction", b.histogram.fractions[i]}};
    }
    j["quadrants"] = q;
    j["teacher_entropy"] = {{"mean", b.teacher_entropy.mean}, {"std", b.teacher_entropy.std}};
    j["retention"] = ordered_json::array();
    for (const auto& m : b.masks) {
      ordered_json r;
      r["strategy"] = to_string(m.strategy);
      r["rho"] = m.rho;
      r["seed"] = m.seed ? ordered_json(*m.seed) : ordered_json(nullptr);
      r["retained"] = m.retained.size();
      r["total"] = m.total;
      j["retention"].push_back(r);
    }
    root["batches"].push_back(j);
  }
  return root.dump(2) + "\n";
}

std::string render_masks(std::span<const BatchAnalysis> batches) {
  std::string out;
  for (const auto& b : batches) {
    for (const auto& m : b.masks) out += mask_json(b.label, m).dump() + "\n";
  }
  return out;
}

void emit_report(std::span<const BatchAnalysis> batches, const std::string& directory) {
  std::error_code ec;
  std::filesystem::create_directories(directory, ec);
  if (ec || !std::filesystem::is_directory(directory)) {
    fail(ErrorKind::Io, "cannot create report directory " + directory);
  }
  const auto dir = std::filesystem::path(directory);
  write_file_atomic((dir / "metrics.csv").string(), render_metrics_csv(batches));
  write_file_atomic((dir / "summary.json").string(), render_summary(batches));
}

}  // namespace tokimp::io
