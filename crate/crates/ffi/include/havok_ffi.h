/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#ifndef HAVOK_FFI_H
#define HAVOK_FFI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Values 2 to 5 match the CLI exit codes.
 */
typedef enum HvkStatus {
  HVK_STATUS_OK = 0,
  HVK_STATUS_CONFIG = 2,
  HVK_STATUS_DATA = 3,
  HVK_STATUS_NUMERICAL = 4,
  HVK_STATUS_DIVERGED = 5,
  HVK_STATUS_NULL_POINTER = 10,
  HVK_STATUS_INVALID_ARGUMENT = 11,
  HVK_STATUS_BUFFER_TOO_SMALL = 12,
  HVK_STATUS_PANIC = 99,
} HvkStatus;

/**
 * Streaming detector handle.
 */
typedef struct HvkDetector HvkDetector;

/**
 * Detector fitting parameters. Zero `rank` selects the hard-threshold rank;
 * zero `rolling_window` selects global statistics.
 */
typedef struct HvkDetectorParams {
  size_t rows;
  size_t delay;
  size_t rank;
  double sigma_multiplier;
  size_t rolling_window;
} HvkDetectorParams;

typedef struct HvkConfusion {
  uint64_t tp;
  uint64_t tn;
  uint64_t fp;
  uint64_t fn_;
} HvkConfusion;

typedef struct HvkDetectionReport {
  double precision;
  double recall;
  double f1;
  double accuracy;
  double mcc;
} HvkDetectionReport;

typedef struct HvkRegressionReport {
  double r2;
  double rmse;
  double explained_variance;
  double mae;
} HvkRegressionReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *hvk_version(void);

/**
 * Defaults used by the detection pipeline.
 */
struct HvkDetectorParams hvk_detector_params_default(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length excluding the NUL.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t hvk_last_error_message(char *buf, size_t len);

/**
 * Fits a detector on `len` samples spaced `dt` seconds apart.
 *
 * # Safety
 * `values` must point to `len` doubles, `params` to a valid struct and `out`
 * to writable storage for one handle.
 */
enum HvkStatus hvk_detector_fit(const double *values,
                                size_t len,
                                double dt,
                                const struct HvkDetectorParams *params,
                                struct HvkDetector **out);

/**
 * Restores a detector from the JSON written by `hvk_detector_to_json` or the
 * CLI's `detector.json`.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` writable.
 */
enum HvkStatus hvk_detector_from_json(const char *json, struct HvkDetector **out);

/**
 * Writes the detector's JSON form into `buf`. `written` receives the length
 * needed excluding the NUL; `BufferTooSmall` is returned if it does not fit.
 *
 * # Safety
 * `det` must be a live handle, `buf` null or `len` writable bytes, `written` writable.
 */
enum HvkStatus hvk_detector_to_json(const struct HvkDetector *det,
                                    char *buf,
                                    size_t len,
                                    size_t *written);

/**
 * Samples required before the first output.
 *
 * # Safety
 * `det` must be null or a live handle.
 */
size_t hvk_detector_warmup(const struct HvkDetector *det);

/**
 * Feeds one sample. `ready` is set to 1 when a full window produced
 * `forcing` and `flag`, else 0.
 *
 * # Safety
 * `det` must be a live handle; output pointers must be writable.
 */
enum HvkStatus hvk_detector_push(struct HvkDetector *det,
                                 double value,
                                 int32_t *ready,
                                 double *forcing,
                                 int32_t *flag);

/**
 * Releases a detector. Null is ignored.
 *
 * # Safety
 * `det` must be null or a handle not yet freed.
 */
void hvk_detector_free(struct HvkDetector *det);

/**
 * Computes the forcing series of `values` and its flags. Output index j
 * corresponds to input sample `j + (rows - 1) * delay`; `written` receives
 * the number of outputs.
 *
 * # Safety
 * `values` must point to `len` doubles; `forcing` and `flags` to `capacity`
 * writable elements; `written` must be writable.
 */
enum HvkStatus hvk_forcing(const double *values,
                           size_t len,
                           double dt,
                           const struct HvkDetectorParams *params,
                           double *forcing,
                           uint8_t *flags,
                           size_t capacity,
                           size_t *written);

/**
 * Scores from a confusion matrix.
 *
 * # Safety
 * `out` must be writable.
 */
enum HvkStatus hvk_detection_metrics(struct HvkConfusion cm, struct HvkDetectionReport *out);

/**
 * Matches predicted against true flags (nonzero bytes are positive) within
 * `tolerance` samples.
 *
 * # Safety
 * `predicted` and `truth` must point to `len` bytes; `out` must be writable.
 */
enum HvkStatus hvk_match_events(const uint8_t *predicted,
                                const uint8_t *truth,
                                size_t len,
                                size_t tolerance,
                                struct HvkConfusion *out);

/**
 * R², RMSE, explained variance and MAE of `predicted` against `actual`.
 *
 * # Safety
 * Both arrays must hold `len` doubles; `out` must be writable.
 */
enum HvkStatus hvk_regression_metrics(const double *actual,
                                      const double *predicted,
                                      size_t len,
                                      struct HvkRegressionReport *out);

/**
 * cos(θ_V − θ_I) per sample, angles in degrees.
 *
 * # Safety
 * Inputs must hold `len` doubles and `out` must have room for `len`.
 */
enum HvkStatus hvk_power_factor(const double *v_angle,
                                const double *i_angle,
                                size_t len,
                                double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAVOK_FFI_H */
