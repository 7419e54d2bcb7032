/* C ABI for the chaincast forecasting engine. */

#ifndef CHAINCAST_H
#define CHAINCAST_H

#include <stdint.h>
#include <stddef.h>

// Rollout algorithm selector.
typedef enum CcAlgorithm {
  // Moving window: fixed-length window, re-run every round.
  CcAlgorithm_MovingWindow = 0,
  // Expanding window: the window grows by one element per round.
  CcAlgorithm_ExpandingWindow = 1,
  // Memoryless: the input is consumed once, then the chain advances one
  // step per round on its own state dynamics.
  CcAlgorithm_Memoryless = 2,
} CcAlgorithm;

// Round-start state handling for the moving-window rollout.
typedef enum CcResetPolicy {
  // Each round starts from zero states.
  CcResetPolicy_Zero = 0,
  // Each round inherits the previous round's final states.
  CcResetPolicy_Inherit = 1,
} CcResetPolicy;

// Result of a chaincast call.
typedef enum CcStatus {
  // Success.
  CcStatus_Ok = 0,
  // A required pointer argument was null.
  CcStatus_NullArgument = 1,
  // An argument value violates the call's contract.
  CcStatus_InvalidArgument = 2,
  // The file could not be read or written.
  CcStatus_IoError = 3,
  // The file is not a valid checkpoint (bad magic, truncation, version).
  CcStatus_FormatError = 4,
  // A numeric failure (divergence, cost-model mismatch).
  CcStatus_NumericError = 5,
  // An internal invariant failed.
  CcStatus_InternalError = 6,
} CcStatus;

// Opaque handle to a loaded model checkpoint.
typedef struct CcModel CcModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *chaincast_version(void);

// Message of the last failing call on this thread. Empty until a call fails;
// the pointer stays valid until the next failing call on the same thread.
const char *chaincast_last_error(void);

// Loads a checkpoint file into a freshly allocated model handle.
// On success writes the handle to `out_model`; free it with
// `chaincast_model_free`.
//
// # Safety
// `path` must point to a NUL-terminated string and `out_model` to writable
// pointer storage.
enum CcStatus chaincast_model_load(const char *path,
                                   struct CcModel **out_model);

// Writes the model back to a checkpoint file (bit-exact round trip).
//
// # Safety
// `model` must be a live handle from `chaincast_model_load`; `path` must
// point to a NUL-terminated string.
enum CcStatus chaincast_model_save(const struct CcModel *model,
                                   const char *path);

// Releases a model handle. Null is ignored.
//
// # Safety
// `model` must be null or a handle from `chaincast_model_load` that has not
// been freed.
void chaincast_model_free(struct CcModel *model);

// Number of recurrent layers in the chain; 0 if `model` is null.
//
// # Safety
// `model` must be null or a live handle.
size_t chaincast_model_depth(const struct CcModel *model);

// Dimension of the input elements (and of predictions); 0 if null.
//
// # Safety
// `model` must be null or a live handle.
size_t chaincast_model_input_dim(const struct CcModel *model);

// Total number of learnable parameters; 0 if null.
//
// # Safety
// `model` must be null or a live handle.
size_t chaincast_model_param_count(const struct CcModel *model);

// Rolls the model forward from a scalar input window.
//
// `input` holds `m` values (the model must have input dimension 1);
// `out_predictions` receives `p` predicted values. On success
// `out_transform_count`, when non-null, receives the measured number of
// state-transformation plus predictor applications. The expanding window is
// capped at m+p, which the rollout never exceeds; `policy` only affects the
// moving window.
//
// # Safety
// `model` must be a live handle; `input` must point to `m` readable doubles
// and `out_predictions` to `p` writable doubles.
enum CcStatus chaincast_predict(const struct CcModel *model,
                                enum CcAlgorithm algorithm,
                                enum CcResetPolicy policy,
                                const double *input,
                                size_t m,
                                size_t p,
                                double *out_predictions,
                                uint64_t *out_transform_count);

// Closed-form transformation count of the moving-window rollout: (mk+1)p.
uint64_t chaincast_count_mw(uint64_t m,
                            uint64_t p,
                            uint64_t k);

// Closed-form transformation count of the expanding-window rollout.
uint64_t chaincast_count_ew(uint64_t m,
                            uint64_t p,
                            uint64_t k);

// Closed-form transformation count of the memoryless rollout: k(m+p-1)+p.
uint64_t chaincast_count_ml(uint64_t m,
                            uint64_t p,
                            uint64_t k);

// Ratio of moving-window to memoryless transformation counts.
double chaincast_speed_gain(uint64_t m,
                            uint64_t p,
                            uint64_t k);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CHAINCAST_H */
