#ifndef PASSNET_LAB_H
#define PASSNET_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Number of players (nodes) in every network.
#define PNL_SLOTS 11

// Number of values written by `pnl_network_metrics`.
#define PNL_METRIC_COUNT 25

typedef enum PnlStatus {
  PNL_STATUS_OK = 0,
  PNL_STATUS_NULL_POINTER = 1,
  PNL_STATUS_INVALID_ARGUMENT = 2,
  PNL_STATUS_CONFIG_ERROR = 3,
  PNL_STATUS_DATA_ERROR = 4,
  PNL_STATUS_NUMERIC_ERROR = 5,
  PNL_STATUS_PANIC = 6,
} PnlStatus;

// Opaque trained model.
typedef struct PnlModel PnlModel;

// Opaque passing network.
typedef struct PnlNetwork PnlNetwork;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *pnl_last_error(void);

// Library version as a static NUL-terminated string.
const char *pnl_version(void);

// Builds a network from an 11x11 row-major pass-count matrix and optional
// mean positions (`xs`/`ys` may be NULL; NaN marks an unknown position).
//
// # Safety
// `weights` must point to 121 values, `xs` and `ys` to 11 values each
// when non-null, and `out` must be writable.
enum PnlStatus pnl_network_new(const uint32_t *weights,
                               const double *xs,
                               const double *ys,
                               struct PnlNetwork **out);

// Completed passes in the network.
//
// # Safety
// `net` must be NULL or a live handle from `pnl_network_new`.
uint64_t pnl_network_total_passes(const struct PnlNetwork *net);

// Writes the 25 aggregate metrics in `pnl_metric_name` order; undefined
// values (no positions, disconnected path length) are NaN.
//
// # Safety
// `net` must be a live handle and `out` must have room for 25 values.
enum PnlStatus pnl_network_metrics(const struct PnlNetwork *net, double *out);

// Column name of metric `index`, or NULL when out of range. The string is
// static.
const char *pnl_metric_name(size_t index);

// # Safety
// `net` must be NULL or a handle not yet freed.
void pnl_network_free(struct PnlNetwork *net);

// Loads a model from the JSON written by the `train` stage.
//
// # Safety
// `json` must be a NUL-terminated string and `out` writable.
enum PnlStatus pnl_model_from_json(const char *json, struct PnlModel **out);

// # Safety
// `model` must be NULL or a live handle.
size_t pnl_model_n_features(const struct PnlModel *model);

// # Safety
// `model` must be NULL or a live handle.
size_t pnl_model_n_classes(const struct PnlModel *model);

// Class probabilities for `n_rows` row-major rows of `n_features` values.
// `out` receives `n_rows * n_classes` values.
//
// # Safety
// `rows` must hold `n_rows * n_features` values and `out` must have room
// for `n_rows * pnl_model_n_classes(model)` values.
enum PnlStatus pnl_model_predict_proba(const struct PnlModel *model,
                                       const double *rows,
                                       size_t n_rows,
                                       size_t n_features,
                                       double *out);

// # Safety
// `model` must be NULL or a handle not yet freed.
void pnl_model_free(struct PnlModel *model);

// Area under the ROC curve; `labels` are 0/1 bytes (nonzero = positive).
//
// # Safety
// `scores` and `labels` must hold `n` values and `out` must be writable.
enum PnlStatus pnl_auc(const double *scores, const uint8_t *labels, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PASSNET_LAB_H */
