#ifndef REMIXER_H
#define REMIXER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RemixerStatus {
  REMIXER_STATUS_OK = 0,
  REMIXER_STATUS_NULL_POINTER = 1,
  REMIXER_STATUS_INVALID_ARGUMENT = 2,
  REMIXER_STATUS_DOMAIN = 3,
  REMIXER_STATUS_IO = 4,
  REMIXER_STATUS_FORMAT = 5,
  REMIXER_STATUS_DEGENERATE = 6,
  REMIXER_STATUS_NUMERICAL = 7,
  REMIXER_STATUS_PANIC = 8,
} RemixerStatus;

/**
 * A loaded checkpoint.
 */
typedef struct RemixerModel RemixerModel;

/**
 * Cached separation of one mixture: source estimates plus the latent
 * representation used for decoder-only re-renders.
 */
typedef struct RemixerSeparation RemixerSeparation;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *remixer_version(void);

/**
 * Message of the last failed call on this thread; empty if none.
 */
const char *remixer_last_error(void);

/**
 * Converts decibels to a linear amplitude ratio.
 *
 * # Safety
 * `out` must be NULL or point to a writable double.
 */
enum RemixerStatus remixer_db_to_linear(double db, double *out);

/**
 * Scale-sensitive SNR in dB.
 *
 * # Safety
 * `reference` and `estimate` must point to `len` doubles; `out` to one writable double.
 */
enum RemixerStatus remixer_snr(const double *reference,
                               const double *estimate,
                               size_t len,
                               double *out);

/**
 * Remix quality: min(SNR, SD-SDR) in dB.
 *
 * # Safety
 * As [`remixer_snr`].
 */
enum RemixerStatus remixer_min_sdr(const double *reference,
                                   const double *estimate,
                                   size_t len,
                                   double *out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated UTF-8 string; `out` must point to a writable handle slot.
 */
enum RemixerStatus remixer_model_load(const char *path, struct RemixerModel **out);

/**
 * Releases a model.
 *
 * # Safety
 * `model` must be NULL or a handle from [`remixer_model_load`] not yet freed.
 */
void remixer_model_free(struct RemixerModel *model);

/**
 * Number of sources the model separates; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t remixer_model_num_sources(const struct RemixerModel *model);

/**
 * Sample rate the model expects; 0 for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
uint32_t remixer_model_sample_rate(const struct RemixerModel *model);

/**
 * Label of source `k`, owned by the model; NULL when out of range.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
const char *remixer_model_label(const struct RemixerModel *model, size_t k);

/**
 * Separates a mixture of `len` samples.
 *
 * # Safety
 * `model` must be a live handle, `samples` must point to `len` doubles and
 * `out` to a writable handle slot.
 */
enum RemixerStatus remixer_separate(const struct RemixerModel *model,
                                    const double *samples,
                                    size_t len,
                                    struct RemixerSeparation **out);

/**
 * Releases a separation.
 *
 * # Safety
 * `sep` must be NULL or a handle from [`remixer_separate`] not yet freed.
 */
void remixer_separation_free(struct RemixerSeparation *sep);

/**
 * Samples per stem; 0 for NULL.
 *
 * # Safety
 * `sep` must be NULL or a live handle.
 */
size_t remixer_separation_len(const struct RemixerSeparation *sep);

/**
 * Copies source estimate `k` into `out`, which must hold exactly
 * [`remixer_separation_len`] samples.
 *
 * # Safety
 * `sep` must be a live handle and `out` must point to `out_len` writable doubles.
 */
enum RemixerStatus remixer_separation_stem(const struct RemixerSeparation *sep,
                                           size_t k,
                                           double *out,
                                           size_t out_len);

/**
 * Renders a remix with per-source gains in dB. Latent-gain checkpoints
 * re-run only the decoder; others scale and sum the cached estimates.
 *
 * # Safety
 * `model` and `sep` must be live handles, `gains_db` must point to `k`
 * doubles and `out` to `out_len` writable doubles.
 */
enum RemixerStatus remixer_separation_remix(const struct RemixerModel *model,
                                            const struct RemixerSeparation *sep,
                                            const double *gains_db,
                                            size_t k,
                                            double *out,
                                            size_t out_len);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* REMIXER_H */
