/* SPDX-License-Identifier: Apache-2.0 */
#ifndef TOKIMP_H_
#define TOKIMP_H_

/*
 * C interface to the token-importance engine.
 *
 * Objects are opaque handles released with their *_free function. Every
 * fallible call returns a tki_status; on failure tki_last_error() returns a
 * message for the calling thread, valid until that thread's next call.
 * Handles are not synchronized: share one across threads only for reads.
 */

#include <stddef.h>
#include <stdint.h>

#if defined(_WIN32)
#define TKI_API __declspec(dllexport)
#else
#define TKI_API __attribute__((visibility("default")))
#endif

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tki_status {
  TKI_OK = 0,
  TKI_E_INVALID_INPUT = 1,
  TKI_E_DIMENSION = 2,
  TKI_E_EMPTY_INPUT = 3,
  TKI_E_EMPTY_SELECTION = 4,
  TKI_E_PARSE = 5,
  TKI_E_VALIDATION = 6,
  TKI_E_SCHEMA = 7,
  TKI_E_IO = 8,
  TKI_E_CONFIG = 9,
  TKI_E_BIAS = 10,
  TKI_E_USAGE = 11,
  TKI_E_INTERNAL = 12
} tki_status;

typedef enum tki_strategy {
  TKI_ENTROPY_SAMPLE = 0,
  TKI_SOFTOR_TOPK = 1,
  TKI_Q3_TOPK = 2,
  TKI_DIV_TOPK = 3,
  TKI_SOFTOR_BOTTOMK = 4,
  TKI_ALL = 5
} tki_strategy;

typedef enum tki_column {
  TKI_COL_H = 0,
  TKI_COL_DELTA_REV = 1,
  TKI_COL_DELTA_FWD = 2,
  TKI_COL_H_HAT = 3,
  TKI_COL_DELTA_HAT = 4,
  TKI_COL_CONF = 5,
  TKI_COL_SOFTOR = 6,
  TKI_COL_Q3_SCORE = 7
} tki_column;

/* median != 0 selects batch-median cutoffs and ignores tau_h / tau_d. */
typedef struct tki_thresholds {
  int median;
  double tau_h;
  double tau_d;
} tki_thresholds;

typedef struct tki_reader tki_reader;
typedef struct tki_batch tki_batch;
typedef struct tki_analysis tki_analysis;

TKI_API const char* tki_version(void);
TKI_API const char* tki_last_error(void);
TKI_API const char* tki_status_name(tki_status status);
/* Accepts "entropy-sample", "softor-topk", "q3-topk", "div-topk",
 * "softor-bottomk", "all". */
TKI_API tki_status tki_strategy_parse(const char* name, tki_strategy* out);
TKI_API const char* tki_strategy_name(tki_strategy strategy);
TKI_API void tki_string_free(char* s);

/* ---- record files -------------------------------------------------- */

/* batch_by_rollout != 0 splits batches on runs of equal rollout_id. */
TKI_API tki_status tki_reader_open(const char* path, int batch_by_rollout, tki_reader** out);
/* Sets *out to NULL at end of input. */
TKI_API tki_status tki_reader_next(tki_reader* reader, tki_batch** out);
TKI_API void tki_reader_free(tki_reader* reader);

/* Row-major m x vocab buffers of probabilities. */
TKI_API tki_status tki_batch_from_flat(const double* student, const double* teacher, size_t m,
                                       size_t vocab, tki_batch** out);
TKI_API size_t tki_batch_size(const tki_batch* batch);
TKI_API size_t tki_batch_vocab_size(const tki_batch* batch);
TKI_API const char* tki_batch_label(const tki_batch* batch);
TKI_API void tki_batch_free(tki_batch* batch);

/* ---- analysis ------------------------------------------------------ */

TKI_API tki_status tki_analyze(const tki_batch* batch, tki_thresholds thresholds,
                               tki_analysis** out);
TKI_API size_t tki_analysis_size(const tki_analysis* a);
/* Copies one metric column; n must equal tki_analysis_size. */
TKI_API tki_status tki_analysis_column(const tki_analysis* a, tki_column column, double* out,
                                       size_t n);
/* Quadrant labels as 1..4. */
TKI_API tki_status tki_analysis_quadrants(const tki_analysis* a, int* out, size_t n);
TKI_API tki_status tki_analysis_histogram(const tki_analysis* a, size_t counts[4],
                                          double fractions[4]);
TKI_API tki_status tki_analysis_teacher_entropy(const tki_analysis* a, double* mean,
                                                double* std);
/* Builds a mask and appends it to the analysis; *mask_index receives its slot. */
TKI_API tki_status tki_analysis_select(tki_analysis* a, tki_strategy strategy, double rho,
                                       uint64_t seed, size_t* mask_index);
TKI_API size_t tki_analysis_mask_count(const tki_analysis* a);
/* Copies retained positions; *len receives the count even when cap is short. */
TKI_API tki_status tki_analysis_mask(const tki_analysis* a, size_t mask_index, size_t* out,
                                     size_t cap, size_t* len);
TKI_API tki_status tki_analysis_masked_loss(const tki_analysis* a, size_t mask_index,
                                            double* out);
TKI_API void tki_analysis_free(tki_analysis* a);

/* metrics.csv + summary.json into dir. */
TKI_API tki_status tki_report_write(const tki_analysis* const* analyses, size_t n,
                                    const char* dir);
/* All masks as JSON lines into path. */
TKI_API tki_status tki_masks_write(const tki_analysis* const* analyses, size_t n,
                                   const char* path);

/* ---- flat batch surface for array-based callers --------------------- */

/* Any output pointer may be NULL. Each non-NULL output holds m doubles. */
TKI_API tki_status tki_score_batch_flat(const double* student, const double* teacher, size_t m,
                                        size_t vocab, double* h, double* delta_rev,
                                        double* delta_fwd, double* h_hat, double* delta_hat,
                                        double* softor, double* q3_score);
/* For entropy-sample the scores are the sampling weights. out_indices holds
 * at least m entries; *out_len receives the retained count. */
TKI_API tki_status tki_select_flat(const double* scores, size_t m, tki_strategy strategy,
                                   double rho, uint64_t seed, size_t* out_indices,
                                   size_t* out_len);

/* ---- simulator and self-checks -------------------------------------- */

/* Runs the toy simulator from key = value config text; *csv_out is a
 * heap string released with tki_string_free. */
TKI_API tki_status tki_simulate(const char* config_text, char** csv_out);
/* Runs the oracle self-check suite; *report_out lists one PASS/FAIL line
 * per check, *all_passed is 1 when all pass. */
TKI_API tki_status tki_oracle_check(size_t seeds, char** report_out, int* all_passed);

#ifdef __cplusplus
}
#endif

#endif /* TOKIMP_H_ */
