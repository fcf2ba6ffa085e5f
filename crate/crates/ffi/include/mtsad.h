#ifndef MTSAD_H
#define MTSAD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  MTSAD_STATUS_OK = 0,
  MTSAD_STATUS_NULL_POINTER = 1,
  MTSAD_STATUS_INVALID_ARGUMENT = 2,
  MTSAD_STATUS_IO = 3,
  MTSAD_STATUS_FORMAT = 4,
  MTSAD_STATUS_SHAPE_MISMATCH = 5,
  MTSAD_STATUS_PANIC = 6,
} MtsadStatus;

/**
 * A fitted one-class detector.
 */
typedef struct MtsadDetector MtsadDetector;

/**
 * A trained autoencoder (T2V or reconstruction).
 */
typedef struct MtsadModel MtsadModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mtsad_version(void);

/**
 * Message of the last failed call on this thread, or an empty string.
 * The pointer stays valid until the next call into this library on the
 * same thread.
 */
const char *mtsad_last_error_message(void);

/**
 * Loads a model file written by `mtsad train`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
MtsadStatus mtsad_model_load(const char *path, MtsadModel **out);

/**
 * Releases a model. Null is ignored.
 *
 * # Safety
 * `model` must come from [`mtsad_model_load`] and not be used afterwards.
 */
void mtsad_model_free(MtsadModel *model);

/**
 * Window shape and embedding length (0 for reconstruction models).
 *
 * # Safety
 * `model` must be a live handle; each output pointer must be valid or null.
 */
MtsadStatus mtsad_model_shape(const MtsadModel *model,
                              size_t *steps,
                              size_t *features,
                              size_t *embedding_len);

/**
 * Flattened T2V embedding of one window into `out[0..out_len]`;
 * `out_len` must equal the model's embedding length.
 *
 * # Safety
 * `window` must hold `steps * features` doubles and `out` `out_len` doubles.
 */
MtsadStatus mtsad_model_embed(const MtsadModel *model,
                              const double *window,
                              size_t steps,
                              size_t features,
                              double *out,
                              size_t out_len);

/**
 * Reconstruction of one window in input units into `out[0..out_len]`;
 * `out_len` must equal `steps * features`.
 *
 * # Safety
 * `window` must hold `steps * features` doubles and `out` `out_len` doubles.
 */
MtsadStatus mtsad_model_reconstruct(const MtsadModel *model,
                                    const double *window,
                                    size_t steps,
                                    size_t features,
                                    double *out,
                                    size_t out_len);

/**
 * Composite reconstruction anomaly score of a calibrated reconstruction
 * model. `is_anomaly` (optional) receives 1 when the score exceeds the
 * model's threshold.
 *
 * # Safety
 * `window` must hold `steps * features` doubles; `score` must be valid.
 */
MtsadStatus mtsad_model_anomaly_score(const MtsadModel *model,
                                      const double *window,
                                      size_t steps,
                                      size_t features,
                                      double *score,
                                      int32_t *is_anomaly);

/**
 * Loads a detector file written by `mtsad fit-detector`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
MtsadStatus mtsad_detector_load(const char *path, MtsadDetector **out);

/**
 * Releases a detector. Null is ignored.
 *
 * # Safety
 * `detector` must come from [`mtsad_detector_load`] and not be used afterwards.
 */
void mtsad_detector_free(MtsadDetector *detector);

/**
 * Input dimension and decision threshold.
 *
 * # Safety
 * `detector` must be a live handle; each output pointer must be valid or null.
 */
MtsadStatus mtsad_detector_info(const MtsadDetector *detector, size_t *dim, double *threshold);

/**
 * Anomaly score of one embedding (higher is more anomalous).
 *
 * # Safety
 * `x` must hold `dim` doubles; `score` must be valid.
 */
MtsadStatus mtsad_detector_score(const MtsadDetector *detector,
                                 const double *x,
                                 size_t dim,
                                 double *score);

/**
 * Writes 1 to `is_anomaly` when the embedding's score exceeds the
 * detector's threshold, else 0.
 *
 * # Safety
 * `x` must hold `dim` doubles; `is_anomaly` must be valid.
 */
MtsadStatus mtsad_detector_predict(const MtsadDetector *detector,
                                   const double *x,
                                   size_t dim,
                                   int32_t *is_anomaly);

/**
 * Multivariate DTW between row-major `na × features` and `nb × features`
 * series. A negative `band` searches the full grid; otherwise it is the
 * Sakoe-Chiba radius.
 *
 * # Safety
 * `a` and `b` must hold `na * features` and `nb * features` doubles.
 */
MtsadStatus mtsad_dtw_distance(const double *a,
                               size_t na,
                               const double *b,
                               size_t nb,
                               size_t features,
                               int64_t band,
                               double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MTSAD_H */
