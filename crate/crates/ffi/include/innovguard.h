#ifndef INNOVGUARD_H
#define INNOVGUARD_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Decision codes reported in `IgIsfdResult.decision`.
#define IG_DECISION_H0 0

#define IG_DECISION_H1 1

typedef enum IgStatus {
  IG_STATUS_OK = 0,
  IG_STATUS_NULL_POINTER = 1,
  IG_STATUS_INVALID_ARGUMENT = 2,
  IG_STATUS_CONFIG = 3,
  IG_STATUS_PARSE = 4,
  IG_STATUS_DEGENERATE = 5,
  IG_STATUS_TRUNCATED_STREAM = 6,
  IG_STATUS_MALFORMED_BLOB = 7,
  IG_STATUS_IO = 8,
  IG_STATUS_BUFFER_TOO_SMALL = 9,
  IG_STATUS_PANIC = 10,
  IG_STATUS_FAILED = 11,
} IgStatus;

// Fitted AR whitening model.
typedef struct IgArModel IgArModel;

// Compressed waveform.
typedef struct IgBlob IgBlob;

// Online detector: raw samples in, decision out.
typedef struct IgDetector IgDetector;

// Detector parameters. `bonferroni` is 0 or 1.
typedef struct IgIsfdConfig {
  uint32_t k;
  double epsilon;
  double c;
  double lambda_sep;
  uint8_t bonferroni;
} IgIsfdConfig;

// Summary of one detector run. `delay_seconds` is NaN for H0.
typedef struct IgIsfdResult {
  int32_t decision;
  uint64_t samples_consumed;
  uint32_t iterations_run;
  double final_statistic;
  double threshold;
  double delay_seconds;
} IgIsfdResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *ig_version(void);

// Copies the calling thread's last error message, NUL-terminated and
// truncated to `cap`. Returns the full message length without the NUL.
size_t ig_last_error_message(char *buf, size_t cap);

// Fits an AR(order) whitening model to anomaly-free samples by Burg's method.
enum IgStatus ig_ar_model_fit(const double *samples,
                              size_t n,
                              double sample_rate,
                              size_t order,
                              struct IgArModel **out);

// Loads a model from its JSON form.
enum IgStatus ig_ar_model_from_json(const char *json, struct IgArModel **out);

// Writes the model as NUL-terminated JSON. `written` counts the NUL.
enum IgStatus ig_ar_model_to_json(const struct IgArModel *model,
                                  char *buf,
                                  size_t cap,
                                  size_t *written);

// AR order, or 0 for a null handle.
size_t ig_ar_model_order(const struct IgArModel *model);

// Samples of history consumed before the first innovation, or 0 for null.
size_t ig_ar_model_warmup(const struct IgArModel *model);

// Encodes samples to uniform innovations; the output has `n - warmup` values.
enum IgStatus ig_ar_model_encode(const struct IgArModel *model,
                                 const double *samples,
                                 size_t n,
                                 double sample_rate,
                                 double *out,
                                 size_t cap,
                                 size_t *written);

void ig_ar_model_free(struct IgArModel *model);

// Fills `out` with the default detector parameters.
enum IgStatus ig_isfd_config_default(struct IgIsfdConfig *out);

// Runs the detector on uniform innovations that start at the test origin.
enum IgStatus ig_isfd_detect(const double *innovations,
                             size_t n,
                             double sample_rate,
                             const struct IgIsfdConfig *config,
                             struct IgIsfdResult *out);

// Encodes raw samples with `model` and tests from `start_index` on.
enum IgStatus ig_isfd_run_waveform(const struct IgArModel *model,
                                   const double *samples,
                                   size_t n,
                                   double sample_rate,
                                   size_t start_index,
                                   const struct IgIsfdConfig *config,
                                   struct IgIsfdResult *out);

// Creates an online detector. The model is copied; the first `order`
// samples pushed only fill the predictor history.
enum IgStatus ig_detector_new(const struct IgArModel *model,
                              double sample_rate,
                              const struct IgIsfdConfig *config,
                              struct IgDetector **out);

// Pushes raw samples. `decided` is set to 1 once a decision is reached;
// later samples only update the predictor history until `ig_detector_reset`.
enum IgStatus ig_detector_push(struct IgDetector *detector,
                               const double *samples,
                               size_t n,
                               uint8_t *decided);

// Outcome of a decided detector; `IG_STATUS_TRUNCATED_STREAM` before that.
enum IgStatus ig_detector_result(const struct IgDetector *detector, struct IgIsfdResult *out);

// Starts a new test origin at the next innovation, keeping the predictor history.
enum IgStatus ig_detector_reset(struct IgDetector *detector);

void ig_detector_free(struct IgDetector *detector);

// Compresses `samples` to mean-square error `relative_distortion` times the
// signal power. Subband AR models of order `ar_order` are fitted on
// `train` (which may alias `samples`).
enum IgStatus ig_compress(const double *samples,
                          size_t n,
                          const double *train,
                          size_t n_train,
                          double sample_rate,
                          double fundamental_freq,
                          size_t harmonics,
                          size_t ar_order,
                          double relative_distortion,
                          struct IgBlob **out);

// Parses a serialized blob.
enum IgStatus ig_blob_from_bytes(const uint8_t *bytes, size_t n, struct IgBlob **out);

// Serializes the blob.
enum IgStatus ig_blob_to_bytes(const struct IgBlob *blob,
                               uint8_t *out,
                               size_t cap,
                               size_t *written);

// Number of samples the blob decodes to, or 0 for null.
uint64_t ig_blob_sample_count(const struct IgBlob *blob);

// Reconstructs the waveform.
enum IgStatus ig_blob_decompress(const struct IgBlob *blob,
                                 double *out,
                                 size_t cap,
                                 size_t *written);

void ig_blob_free(struct IgBlob *blob);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* INNOVGUARD_H */
