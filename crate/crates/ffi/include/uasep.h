#ifndef UASEP_H
#define UASEP_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum UasepStatus {
  UASEP_STATUS_OK = 0,
  UASEP_STATUS_NULL_POINTER = 1,
  UASEP_STATUS_INVALID_ARGUMENT = 2,
  UASEP_STATUS_CONFIG = 3,
  UASEP_STATUS_FORMAT = 4,
  UASEP_STATUS_DEGENERATE = 5,
  UASEP_STATUS_UNDEFINED_METRIC = 6,
  UASEP_STATUS_DIVERGED = 7,
  UASEP_STATUS_IO = 8,
  UASEP_STATUS_BUFFER_TOO_SMALL = 9,
  UASEP_STATUS_PANIC = 10,
} UasepStatus;

/**
 * Result of one separation: estimates and their binary masks.
 */
typedef struct UasepSeparation UasepSeparation;

/**
 * Configured separator handle; holds the network for the deep method.
 */
typedef struct UasepSeparator UasepSeparator;

/**
 * Time signal handle.
 */
typedef struct UasepSignal UasepSignal;

/**
 * Complex spectrogram handle.
 */
typedef struct UasepSpectrogram UasepSpectrogram;

/**
 * Aggregate scores against references, means over aligned pairs.
 */
typedef struct UasepScores {
  double mean_xi;
  double mean_psr;
  /**
   * `INFINITY` when no interference energy survives any mask.
   */
  double mean_sir_m;
} UasepScores;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failed call on this thread, or null. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *uasep_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *uasep_version(void);

/**
 * Copies `len` samples into a new signal.
 *
 * # Safety
 * `samples` is valid for `len` reads; `out` is valid for one write.
 */
enum UasepStatus uasep_signal_new(const double *samples,
                                  size_t len,
                                  uint32_t sample_rate,
                                  struct UasepSignal **out);

/**
 * # Safety
 * `signal` is a live handle; `len` and `sample_rate` are null or writable.
 */
enum UasepStatus uasep_signal_info(const struct UasepSignal *signal,
                                   size_t *len,
                                   uint32_t *sample_rate);

/**
 * Copies the samples into `buf`, which must hold the full signal.
 *
 * # Safety
 * `signal` is a live handle; `buf` is valid for `capacity` writes.
 */
enum UasepStatus uasep_signal_copy(const struct UasepSignal *signal, double *buf, size_t capacity);

/**
 * # Safety
 * `signal` is null or a handle not yet freed.
 */
void uasep_signal_free(struct UasepSignal *signal);

/**
 * Short-time Fourier transform. `window`: 0 Hann, 1 sqrt-Hann, 2 Hamming,
 * 3 rectangular.
 *
 * # Safety
 * `signal` is a live handle; `out` is valid for one write.
 */
enum UasepStatus uasep_stft(const struct UasepSignal *signal,
                            double frame_ms,
                            double hop_ms,
                            uint8_t window,
                            struct UasepSpectrogram **out);

/**
 * # Safety
 * `spec` is a live handle; `frames` and `bins` are null or writable.
 */
enum UasepStatus uasep_spectrogram_shape(const struct UasepSpectrogram *spec,
                                         size_t *frames,
                                         size_t *bins);

/**
 * Resynthesizes a signal of the analyzed length.
 *
 * # Safety
 * `spec` is a live handle; `out` is valid for one write.
 */
enum UasepStatus uasep_istft(const struct UasepSpectrogram *spec, struct UasepSignal **out);

/**
 * # Safety
 * `spec` is null or a handle not yet freed.
 */
void uasep_spectrogram_free(struct UasepSpectrogram *spec);

/**
 * Builds a separator from a JSON pipeline configuration; null or an empty
 * string selects the defaults. The deep method loads its checkpoint here.
 *
 * # Safety
 * `config_json` is null or a NUL-terminated string; `out` is valid for one
 * write.
 */
enum UasepStatus uasep_separator_new(const char *config_json, struct UasepSeparator **out);

/**
 * # Safety
 * `separator` is null or a handle not yet freed.
 */
void uasep_separator_free(struct UasepSeparator *separator);

/**
 * Separates `count` observations of the same scene into `sources` estimates
 * (or the configured fixed cluster count).
 *
 * # Safety
 * `separator` is a live handle; `observations` points to `count` live
 * signal handles; `out` is valid for one write.
 */
enum UasepStatus uasep_separate(const struct UasepSeparator *separator,
                                const struct UasepSignal *const *observations,
                                size_t count,
                                size_t sources,
                                struct UasepSeparation **out);

/**
 * Number of estimates, one per cluster.
 *
 * # Safety
 * `separation` is a live handle; `count` is writable.
 */
enum UasepStatus uasep_separation_count(const struct UasepSeparation *separation, size_t *count);

/**
 * Copies estimate `index` into a new signal handle.
 *
 * # Safety
 * `separation` is a live handle; `out` is valid for one write.
 */
enum UasepStatus uasep_separation_estimate(const struct UasepSeparation *separation,
                                           size_t index,
                                           struct UasepSignal **out);

/**
 * Copies mask `index` as row-major `frames x bins` bytes of 0 or 1; the
 * shape matches the mixture spectrogram.
 *
 * # Safety
 * `separation` is a live handle; `buf` is valid for `capacity` writes.
 */
enum UasepStatus uasep_separation_mask(const struct UasepSeparation *separation,
                                       size_t index,
                                       uint8_t *buf,
                                       size_t capacity);

/**
 * Mixture spectrogram shape, which is also every mask's shape.
 *
 * # Safety
 * `separation` is a live handle; `frames` and `bins` are null or writable.
 */
enum UasepStatus uasep_separation_shape(const struct UasepSeparation *separation,
                                        size_t *frames,
                                        size_t *bins);

/**
 * Scores the estimates against `count` clean references after aligning
 * each reference to its best estimate.
 *
 * # Safety
 * `separation` is a live handle; `references` points to `count` live
 * signal handles; `scores` is writable.
 */
enum UasepStatus uasep_separation_evaluate(const struct UasepSeparation *separation,
                                           const struct UasepSignal *const *references,
                                           size_t count,
                                           struct UasepScores *scores);

/**
 * # Safety
 * `separation` is null or a handle not yet freed.
 */
void uasep_separation_free(struct UasepSeparation *separation);

/**
 * Similarity coefficient of an estimate against a reference, in [0, 1].
 *
 * # Safety
 * Both signals are live handles; `out` is writable.
 */
enum UasepStatus uasep_similarity(const struct UasepSignal *estimate,
                                  const struct UasepSignal *reference,
                                  double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UASEP_H */
