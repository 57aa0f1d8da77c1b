#ifndef TAPSIM_H
#define TAPSIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  TAPSIM_STATUS_OK = 0,
  TAPSIM_STATUS_NULL_POINTER = 1,
  TAPSIM_STATUS_INVALID_ARGUMENT = 2,
  TAPSIM_STATUS_IO = 3,
  TAPSIM_STATUS_INVALID_DATA = 4,
  TAPSIM_STATUS_NUMERIC = 5,
  TAPSIM_STATUS_INVALID_STATE = 6,
  TAPSIM_STATUS_PANIC = 7,
} TapsimStatus;

typedef enum {
  TAPSIM_STRATEGY_NON_PREDICTIVE = 0,
  TAPSIM_STRATEGY_SINGLE_PREDICTIVE = 1,
  TAPSIM_STRATEGY_TAP = 2,
} TapsimStrategy;

typedef enum {
  TAPSIM_SOURCE_ACTUAL = 0,
  TAPSIM_SOURCE_SHORT_TERM = 1,
  TAPSIM_SOURCE_LONG_TERM = 2,
  TAPSIM_SOURCE_HOLD_LAST = 3,
} TapsimSource;

typedef struct TapsimAr TapsimAr;

typedef struct TapsimEngine TapsimEngine;

typedef struct TapsimGru TapsimGru;

typedef struct {
  size_t layers;
  size_t input_dim;
  size_t hidden;
  size_t window;
  size_t horizon;
} TapsimGruShape;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. Valid until the
// next call into the library on this thread.
const char *tapsim_last_error_message(void);

// Commands per packet, `ceil(sample_rate / transmit_rate)`.
//
// # Safety
// `out` must be null or valid for a write.
TapsimStatus tapsim_compute_mu(double sample_rate_hz, double transmit_rate_hz, size_t *out);

// A randomly initialised network.
//
// # Safety
// `out` must be null or valid for a write.
TapsimStatus tapsim_gru_new(size_t layers,
                            size_t input_dim,
                            size_t hidden,
                            size_t window,
                            size_t horizon,
                            uint64_t seed,
                            TapsimGru **out);

// # Safety
// `path` must be null or a NUL-terminated string; `out` null or writable.
TapsimStatus tapsim_gru_load(const char *path, TapsimGru **out);

// # Safety
// `gru` must come from this library; `path` as in [`tapsim_gru_load`].
TapsimStatus tapsim_gru_save(const TapsimGru *gru, const char *path);

// # Safety
// `gru` must come from this library; `out` null or writable.
TapsimStatus tapsim_gru_shape(const TapsimGru *gru, TapsimGruShape *out);

// Predicts `horizon` vectors from a window of `window + 1` vectors.
// `window_values` holds `(window + 1) * input_dim` values, `out` holds
// `horizon * input_dim`.
//
// # Safety
// Pointers must be valid for the stated lengths.
TapsimStatus tapsim_gru_forward(const TapsimGru *gru,
                                const double *window_values,
                                size_t window_len,
                                double *out,
                                size_t out_len);

// # Safety
// `gru` must be null or come from this library, and not be used afterwards.
void tapsim_gru_free(TapsimGru *gru);

// Ridge AR fit over a window of `rows` vectors of `dim` values.
//
// # Safety
// `window_values` must hold `rows * dim` values; `out` null or writable.
TapsimStatus tapsim_ar_fit(const double *window_values,
                           size_t rows_count,
                           size_t dim,
                           size_t order,
                           double ridge,
                           TapsimAr **out);

// Recursive forecast of `steps` vectors from the last `order` rows of the
// given window. `out` holds `steps * dim` values.
//
// # Safety
// Pointers must be valid for the stated lengths.
TapsimStatus tapsim_ar_predict(const TapsimAr *ar,
                               const double *window_values,
                               size_t rows_count,
                               size_t steps,
                               double *out,
                               size_t out_len);

// # Safety
// `ar` must be null or come from this library, and not be used afterwards.
void tapsim_ar_free(TapsimAr *ar);

// A support engine. `config_json` is an engine config object (null or
// `"{}"` for defaults). `gru` is required for the TAP strategy and is
// copied, so it may be freed afterwards.
//
// # Safety
// `initial` must hold `dim` values; other pointers null or valid.
TapsimStatus tapsim_engine_new(const char *config_json,
                               TapsimStrategy strategy,
                               const double *initial,
                               size_t dim,
                               const TapsimGru *gru,
                               TapsimEngine **out);

// Delivers a payload of `count` commands for slots `slots[i]`, with
// `count * dim` values; the last command is the actuation candidate when
// `on_time`.
//
// # Safety
// Pointers must be valid for the stated lengths.
TapsimStatus tapsim_engine_ingest(TapsimEngine *engine,
                                  const size_t *slots,
                                  const double *values,
                                  size_t count,
                                  bool on_time,
                                  size_t now);

// Chooses the command for slot `now` into `command` (`dim` values) and its
// origin into `source`.
//
// # Safety
// `command` must hold `dim` values; `source` null or writable.
TapsimStatus tapsim_engine_decide(TapsimEngine *engine,
                                  size_t now,
                                  double *command,
                                  size_t dim,
                                  TapsimSource *source);

// # Safety
// `engine` must be null or come from this library, and not be used afterwards.
void tapsim_engine_free(TapsimEngine *engine);

// Runs a whole scenario (JSON text) and returns the report as JSON in
// `*report_out`, to be released with [`tapsim_string_free`]. Relative paths
// in the scenario resolve against the working directory.
//
// # Safety
// `scenario_json` must be a NUL-terminated string; `report_out` writable.
TapsimStatus tapsim_run_experiment_json(const char *scenario_json, char **report_out);

// # Safety
// `s` must be null or a string returned by this library.
void tapsim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TAPSIM_H */
