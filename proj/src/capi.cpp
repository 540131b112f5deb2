// SPDX-License-Identifier: Apache-2.0
#include "tokimp.h"

#include <cstdlib>
#include <cstring>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

#include "tokimp/error.hpp"
#include "tokimp/oracle_theory.hpp"
#include "tokimp/record_io.hpp"
#include "tokimp/report.hpp"
#include "tokimp/toy_sim.hpp"

using namespace tokimp;

struct tki_reader {
  std::ifstream file;
  std::unique_ptr<io::RecordReader> reader;
  bool by_rollout = false;
  std::size_t batches = 0;
};

struct tki_batch {
  std::vector<TokenRecord> records;
  std::string label;
};

struct tki_analysis {
  io::BatchAnalysis analysis;
};

namespace {

thread_local std::string g_last_error;

tki_status status_of(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::InvalidInput: return TKI_E_INVALID_INPUT;
    case ErrorKind::Dimension: return TKI_E_DIMENSION;
    case ErrorKind::EmptyInput: return TKI_E_EMPTY_INPUT;
    case ErrorKind::EmptySelection: return TKI_E_EMPTY_SELECTION;
    case ErrorKind::Parse: return TKI_E_PARSE;
    case ErrorKind::Validation: return TKI_E_VALIDATION;
    case ErrorKind::Schema: return TKI_E_SCHEMA;
    case ErrorKind::Io: return TKI_E_IO;
    case ErrorKind::Config: return TKI_E_CONFIG;
    case ErrorKind::Bias: return TKI_E_BIAS;
    case ErrorKind::Usage: return TKI_E_USAGE;
  }
  return TKI_E_INTERNAL;
}

template <typename F>
tki_status guarded(F&& body) {
  try {
    g_last_error.clear();
    body();
    return TKI_OK;
  } catch (const Error& e) {
    g_last_error = e.what();
    return status_of(e.kind());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
  } catch (const std::exception& e) {
    g_last_error = e.what();
  } catch (...) {
    g_last_error = "unknown error";
  }
  return TKI_E_INTERNAL;
}

void require(bool ok, const char* what) {
  if (!ok) fail(ErrorKind::InvalidInput, what);
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::vector<TokenRecord> flat_records(const double* student, const double* teacher, size_t m,
                                      size_t vocab) {
  require(student != nullptr && teacher != nullptr, "null buffer");
  if (m == 0) fail(ErrorKind::EmptyInput, "empty flat batch");
  std::vector<TokenRecord> records;
  records.reserve(m);
  for (size_t t = 0; t < m; ++t) {
    try {
      records.push_back({t,
                         ProbDist({student + t * vocab, student + (t + 1) * vocab}),
                         ProbDist({teacher + t * vocab, teacher + (t + 1) * vocab}),
                         0,
                         std::nullopt});
    } catch (const Error& e) {
      throw Error(e.kind(), "row " + std::to_string(t) + ": " + e.what());
    }
  }
  return records;
}

QuadrantThresholds to_core(tki_thresholds th) {
  if (th.median != 0) return QuadrantThresholds::batch_median();
  return QuadrantThresholds::fixed(th.tau_h, th.tau_d);
}

Strategy to_core(tki_strategy s) {
  if (s < TKI_ENTROPY_SAMPLE || s > TKI_ALL) fail(ErrorKind::InvalidInput, "unknown strategy");
  return static_cast<Strategy>(s);
}

std::vector<io::BatchAnalysis> gather(const tki_analysis* const* analyses, size_t n) {
  require(analyses != nullptr || n == 0, "null analysis list");
  std::vector<io::BatchAnalysis> out;
  out.reserve(n);
  for (size_t i = 0; i < n; ++i) {
    require(analyses[i] != nullptr, "null analysis");
    out.push_back(analyses[i]->analysis);
  }
  return out;
}

}  // namespace

static_assert(static_cast<int>(Strategy::EntropySample) == TKI_ENTROPY_SAMPLE);
static_assert(static_cast<int>(Strategy::All) == TKI_ALL);

extern "C" {

const char* tki_version(void) { return "0.1.0"; }

const char* tki_last_error(void) { return g_last_error.c_str(); }

const char* tki_status_name(tki_status status) {
  switch (status) {
    case TKI_OK: return "ok";
    case TKI_E_INVALID_INPUT: return "invalid_input";
    case TKI_E_DIMENSION: return "dimension";
    case TKI_E_EMPTY_INPUT: return "empty_input";
    case TKI_E_EMPTY_SELECTION: return "empty_selection";
    case TKI_E_PARSE: return "parse";
    case TKI_E_VALIDATION: return "validation";
    case TKI_E_SCHEMA: return "schema";
    case TKI_E_IO: return "io";
    case TKI_E_CONFIG: return "config";
    case TKI_E_BIAS: return "bias";
    case TKI_E_USAGE: return "usage";
    case TKI_E_INTERNAL: return "internal";
  }
  return "unknown";
}

tki_status tki_strategy_parse(const char* name, tki_strategy* out) {
  return guarded([&] {
    require(name != nullptr && out != nullptr, "null argument");
    const auto s = parse_strategy(name);
    if (!s) fail(ErrorKind::Usage, std::string("unknown strategy '") + name + "'");
    *out = static_cast<tki_strategy>(*s);
  });
}

const char* tki_strategy_name(tki_strategy strategy) {
  if (strategy < TKI_ENTROPY_SAMPLE || strategy > TKI_ALL) return "?";
  return to_string(static_cast<Strategy>(strategy));
}

void tki_string_free(char* s) { std::free(s); }

tki_status tki_reader_open(const char* path, int batch_by_rollout, tki_reader** out) {
  return guarded([&] {
    require(path != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    auto r = std::make_unique<tki_reader>();
    r->file.open(path, std::ios::binary);
    if (!r->file) fail(ErrorKind::Io, std::string("cannot open ") + path);
    r->reader = std::make_unique<io::RecordReader>(r->file);
    r->by_rollout = batch_by_rollout != 0;
    *out = r.release();
  });
}

tki_status tki_reader_next(tki_reader* reader, tki_batch** out) {
  return guarded([&] {
    require(reader != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    auto records = reader->reader->next_batch(reader->by_rollout);
    if (!records) return;
    auto b = std::make_unique<tki_batch>();
    b->label = reader->by_rollout ? *records->front().rollout_id
                                  : std::to_string(reader->batches);
    ++reader->batches;
    b->records = std::move(*records);
    *out = b.release();
  });
}

void tki_reader_free(tki_reader* reader) { delete reader; }

tki_status tki_batch_from_flat(const double* student, const double* teacher, size_t m,
                               size_t vocab, tki_batch** out) {
  return guarded([&] {
    require(out != nullptr, "null argument");
    *out = nullptr;
    auto b = std::make_unique<tki_batch>();
    b->records = flat_records(student, teacher, m, vocab);
    b->label = "0";
    *out = b.release();
  });
}

size_t tki_batch_size(const tki_batch* batch) { return batch ? batch->records.size() : 0; }

size_t tki_batch_vocab_size(const tki_batch* batch) {
  return batch && !batch->records.empty() ? batch->records.front().student.vocab_size() : 0;
}

const char* tki_batch_label(const tki_batch* batch) { return batch ? batch->label.c_str() : ""; }

void tki_batch_free(tki_batch* batch) { delete batch; }

tki_status tki_analyze(const tki_batch* batch, tki_thresholds thresholds, tki_analysis** out) {
  return guarded([&] {
    require(batch != nullptr && out != nullptr, "null argument");
    *out = nullptr;
    auto a = std::make_unique<tki_analysis>();
    a->analysis = io::analyze_batch(batch->records, to_core(thresholds), batch->label);
    *out = a.release();
  });
}

size_t tki_analysis_size(const tki_analysis* a) { return a ? a->analysis.metrics.size() : 0; }

tki_status tki_analysis_column(const tki_analysis* a, tki_column column, double* out, size_t n) {
  return guarded([&] {
    require(a != nullptr && out != nullptr, "null argument");
    const auto& ms = a->analysis.metrics;
    if (n != ms.size()) fail(ErrorKind::Dimension, "column buffer length mismatch");
    for (size_t t = 0; t < n; ++t) {
      const auto& m = ms[t];
      switch (column) {
        case TKI_COL_H: out[t] = m.h; break;
        case TKI_COL_DELTA_REV: out[t] = m.delta_rev; break;
        case TKI_COL_DELTA_FWD: out[t] = m.delta_fwd; break;
        case TKI_COL_H_HAT: out[t] = m.h_hat; break;
        case TKI_COL_DELTA_HAT: out[t] = m.delta_hat; break;
        case TKI_COL_CONF: out[t] = m.conf; break;
        case TKI_COL_SOFTOR: out[t] = m.softor; break;
        case TKI_COL_Q3_SCORE: out[t] = m.q3_score; break;
        default: fail(ErrorKind::InvalidInput, "unknown column");
      }
    }
  });
}

tki_status tki_analysis_quadrants(const tki_analysis* a, int* out, size_t n) {
  return guarded([&] {
    require(a != nullptr && out != nullptr, "null argument");
    const auto& ms = a->analysis.metrics;
    if (n != ms.size()) fail(ErrorKind::Dimension, "label buffer length mismatch");
    for (size_t t = 0; t < n; ++t) out[t] = static_cast<int>(*ms[t].quadrant) + 1;
  });
}

tki_status tki_analysis_histogram(const tki_analysis* a, size_t counts[4], double fractions[4]) {
  return guarded([&] {
    require(a != nullptr, "null argument");
    for (int q = 0; q < 4; ++q) {
      if (counts) counts[q] = a->analysis.histogram.counts[q];
      if (fractions) fractions[q] = a->analysis.histogram.fractions[q];
    }
  });
}

tki_status tki_analysis_teacher_entropy(const tki_analysis* a, double* mean, double* std) {
  return guarded([&] {
    require(a != nullptr && mean != nullptr && std != nullptr, "null argument");
    *mean = a->analysis.teacher_entropy.mean;
    *std = a->analysis.teacher_entropy.std;
  });
}

tki_status tki_analysis_select(tki_analysis* a, tki_strategy strategy, double rho, uint64_t seed,
                               size_t* mask_index) {
  return guarded([&] {
    require(a != nullptr, "null argument");
    auto& an = a->analysis;
    an.masks.push_back(select(an.metrics, to_core(strategy), rho, seed));
    if (mask_index) *mask_index = an.masks.size() - 1;
  });
}

size_t tki_analysis_mask_count(const tki_analysis* a) { return a ? a->analysis.masks.size() : 0; }

tki_status tki_analysis_mask(const tki_analysis* a, size_t mask_index, size_t* out, size_t cap,
                             size_t* len) {
  return guarded([&] {
    require(a != nullptr && len != nullptr, "null argument");
    if (mask_index >= a->analysis.masks.size()) fail(ErrorKind::InvalidInput, "no such mask");
    const auto& r = a->analysis.masks[mask_index].retained;
    *len = r.size();
    if (out != nullptr) std::copy_n(r.begin(), std::min(cap, r.size()), out);
  });
}

tki_status tki_analysis_masked_loss(const tki_analysis* a, size_t mask_index, double* out) {
  return guarded([&] {
    require(a != nullptr && out != nullptr, "null argument");
    if (mask_index >= a->analysis.masks.size()) fail(ErrorKind::InvalidInput, "no such mask");
    *out = masked_loss(a->analysis.metrics, a->analysis.masks[mask_index]);
  });
}

void tki_analysis_free(tki_analysis* a) { delete a; }

tki_status tki_report_write(const tki_analysis* const* analyses, size_t n, const char* dir) {
  return guarded([&] {
    require(dir != nullptr, "null directory");
    io::emit_report(gather(analyses, n), dir);
  });
}

tki_status tki_masks_write(const tki_analysis* const* analyses, size_t n, const char* path) {
  return guarded([&] {
    require(path != nullptr, "null path");
    io::write_file_atomic(path, io::render_masks(gather(analyses, n)));
  });
}

tki_status tki_score_batch_flat(const double* student, const double* teacher, size_t m,
                                size_t vocab, double* h, double* delta_rev, double* delta_fwd,
                                double* h_hat, double* delta_hat, double* softor,
                                double* q3_score) {
  return guarded([&] {
    const auto records = flat_records(student, teacher, m, vocab);
    const auto metrics = score_batch(records);
    for (size_t t = 0; t < m; ++t) {
      const auto& x = metrics[t];
      if (h) h[t] = x.h;
      if (delta_rev) delta_rev[t] = x.delta_rev;
      if (delta_fwd) delta_fwd[t] = x.delta_fwd;
      if (h_hat) h_hat[t] = x.h_hat;
      if (delta_hat) delta_hat[t] = x.delta_hat;
      if (softor) softor[t] = x.softor;
      if (q3_score) q3_score[t] = x.q3_score;
    }
  });
}

tki_status tki_select_flat(const double* scores, size_t m, tki_strategy strategy, double rho,
                           uint64_t seed, size_t* out_indices, size_t* out_len) {
  return guarded([&] {
    require(scores != nullptr && out_indices != nullptr && out_len != nullptr, "null argument");
    const std::span<const double> s(scores, m);
    SelectionMask mask;
    switch (to_core(strategy)) {
      case Strategy::EntropySample: mask = weighted_sample(s, rho, seed); break;
      case Strategy::SoftorBottomk: mask = bottomk_by_score(s, rho); break;
      case Strategy::All: mask = select_all(m); break;
      default: mask = topk_by_score(s, rho); break;
    }
    std::copy(mask.retained.begin(), mask.retained.end(), out_indices);
    *out_len = mask.retained.size();
  });
}

tki_status tki_simulate(const char* config_text, char** csv_out) {
  return guarded([&] {
    require(config_text != nullptr && csv_out != nullptr, "null argument");
    *csv_out = nullptr;
    const auto config = sim::parse_sim_config(config_text);
    const auto result = sim::run_experiment(config);
    std::ostringstream out;
    sim::write_experiment_csv(out, result);
    *csv_out = dup_string(out.str());
  });
}

tki_status tki_oracle_check(size_t seeds, char** report_out, int* all_passed) {
  return guarded([&] {
    require(report_out != nullptr && all_passed != nullptr, "null argument");
    *report_out = nullptr;
    if (seeds == 0) fail(ErrorKind::InvalidInput, "seeds must be positive");
    const auto results = run_oracle_checks(seeds);
    std::string text;
    bool ok = true;
    for (const auto& r : results) {
      text += (r.passed ? "PASS " : "FAIL ") + r.name + ": " + r.detail + "\n";
      ok = ok && r.passed;
    }
    *all_passed = ok ? 1 : 0;
    *report_out = dup_string(text);
  });
}

}  // extern "C"
