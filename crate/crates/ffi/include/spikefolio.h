#ifndef SPIKEFOLIO_H
#define SPIKEFOLIO_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SfStatus {
  SF_STATUS_OK = 0,
  SF_STATUS_NULL_POINTER = 1,
  SF_STATUS_INVALID_UTF8 = 2,
  SF_STATUS_INVALID_ARGUMENT = 3,
  SF_STATUS_NOT_FOUND = 4,
  SF_STATUS_IO = 5,
  SF_STATUS_CHECKPOINT = 6,
  SF_STATUS_DIMENSION = 7,
  SF_STATUS_QUANTIZE = 8,
  SF_STATUS_METRICS = 9,
  SF_STATUS_PANIC = 10,
  SF_STATUS_INTERNAL = 11,
} SfStatus;

/**
 * Float network plus the encoder generator used in probabilistic mode.
 */
typedef struct SfNetwork SfNetwork;

typedef struct SfQuantizedNetwork SfQuantizedNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL if none.
 * Free with `sf_string_free`.
 */
char *sf_last_error_message(void);

/**
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sf_string_free(char *s);

/**
 * Fresh network with default hyperparameters for `assets` risky assets.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum SfStatus sf_network_init(size_t assets, uint64_t seed, struct SfNetwork **out);

/**
 * Loads a float checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_network_load(const char *path, struct SfNetwork **out);

/**
 * Parses checkpoint JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_network_from_json(const char *json, struct SfNetwork **out);

/**
 * Checkpoint JSON for the network, or NULL on failure. Free with `sf_string_free`.
 *
 * # Safety
 * `net` must be a live handle.
 */
char *sf_network_to_json(const struct SfNetwork *net);

/**
 * Length of the state vector the network expects; 0 for a NULL handle.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t sf_network_state_dim(const struct SfNetwork *net);

/**
 * Number of portfolio weights (cash first) the network emits; 0 for a NULL handle.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
size_t sf_network_num_actions(const struct SfNetwork *net);

/**
 * One inference: writes `out_len` portfolio weights to `out`.
 *
 * # Safety
 * `net` must be a live handle, `state` must hold `state_len` doubles and
 * `out` must have room for `out_len` doubles.
 */
enum SfStatus sf_network_forward(struct SfNetwork *net,
                                 const double *state,
                                 size_t state_len,
                                 double *out,
                                 size_t out_len);

/**
 * # Safety
 * `net` must be NULL or a handle from this library, freed at most once.
 */
void sf_network_free(struct SfNetwork *net);

/**
 * Rescales every layer to integers with weights in `[-w_max, w_max]`.
 *
 * # Safety
 * `net` must be a live handle and `out` a valid pointer.
 */
enum SfStatus sf_network_quantize(const struct SfNetwork *net,
                                  int32_t w_max,
                                  struct SfQuantizedNetwork **out);

/**
 * Loads a quantized checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum SfStatus sf_quantized_load(const char *path, struct SfQuantizedNetwork **out);

/**
 * # Safety
 * Same contract as `sf_network_forward`.
 */
enum SfStatus sf_quantized_forward(struct SfQuantizedNetwork *net,
                                   const double *state,
                                   size_t state_len,
                                   double *out,
                                   size_t out_len);

/**
 * Threshold of quantized layer `layer`, or -1 if out of range.
 *
 * # Safety
 * `net` must be NULL or a live handle.
 */
int64_t sf_quantized_threshold(const struct SfQuantizedNetwork *net, size_t layer);

/**
 * # Safety
 * `net` must be NULL or a handle from this library, freed at most once.
 */
void sf_quantized_free(struct SfQuantizedNetwork *net);

/**
 * Final accumulated portfolio value of an equity curve.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` must be writable.
 */
enum SfStatus sf_fapv(const double *values, size_t len, double *out);

/**
 * Maximum drawdown of an equity curve.
 *
 * # Safety
 * `values` must hold `len` doubles and `out` must be writable.
 */
enum SfStatus sf_mdd(const double *values, size_t len, double *out);

/**
 * Per-period Sharpe ratio of `returns` against `risk_free`.
 *
 * # Safety
 * `returns` must hold `len` doubles and `out` must be writable.
 */
enum SfStatus sf_sharpe(const double *returns, size_t len, double risk_free, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SPIKEFOLIO_H */
