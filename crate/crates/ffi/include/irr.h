#ifndef IRR_H
#define IRR_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Zero is success.
 */
typedef enum IrrStatus {
  IRR_STATUS_OK = 0,
  IRR_STATUS_NULL_POINTER = 1,
  IRR_STATUS_INVALID_ARGUMENT = 2,
  IRR_STATUS_IO = 3,
  IRR_STATUS_PARSE = 4,
  IRR_STATUS_DIMENSION = 5,
  IRR_STATUS_NUMERICAL = 6,
  IRR_STATUS_PANIC = 7,
} IrrStatus;

/**
 * Opaque dataset handle.
 */
typedef struct IrrDataset IrrDataset;

/**
 * Opaque fitted model handle.
 */
typedef struct IrrModel IrrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failing call on this thread, or NULL. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *irr_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *irr_version(void);

/**
 * Load a CSV file. `label_col` is a zero-based index or a header name;
 * empty cells and `?` mark missing features.
 *
 * # Safety
 * `path` and `label_col` must be NUL-terminated strings and `out` a valid
 * pointer to writable storage.
 */
enum IrrStatus irr_dataset_load_csv(const char *path,
                                    const char *label_col,
                                    bool has_header,
                                    struct IrrDataset **out);

/**
 * Build a dataset from row-major `x` (`n * d` values, NaN for a missing
 * entry) and labels `y` (`n` values).
 *
 * # Safety
 * `x` must point to `n * d` readable doubles, `y` to `n`, and `out` to
 * writable storage.
 */
enum IrrStatus irr_dataset_from_arrays(const double *x,
                                       const double *y,
                                       size_t n,
                                       size_t d,
                                       struct IrrDataset **out);

/**
 * Min-max normalized copy of `data` (features and label in `[0, 1]`).
 *
 * # Safety
 * `data` must be a live handle and `out` writable.
 */
enum IrrStatus irr_dataset_normalize(const struct IrrDataset *data, struct IrrDataset **out);

/**
 * Number of samples, or 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t irr_dataset_rows(const struct IrrDataset *data);

/**
 * Number of features, or 0 for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
size_t irr_dataset_cols(const struct IrrDataset *data);

/**
 * Fraction of observed feature entries, or NaN for NULL.
 *
 * # Safety
 * `data` must be NULL or a live handle.
 */
double irr_dataset_fraction_observed(const struct IrrDataset *data);

/**
 * # Safety
 * `data` must be NULL or a handle not yet freed.
 */
void irr_dataset_free(struct IrrDataset *data);

/**
 * Solve the relaxed problem on `train`. `tol <= 0` and `max_iter == 0`
 * select the defaults.
 *
 * # Safety
 * `train` must be a live handle and `out` writable.
 */
enum IrrStatus irr_solve(const struct IrrDataset *train,
                         double lambda,
                         double gamma,
                         double tol,
                         size_t max_iter,
                         struct IrrModel **out);

/**
 * Write one prediction per sample of `data` into `out[0..len]`; `len`
 * must equal the number of samples.
 *
 * # Safety
 * `model` and `data` must be live handles and `out` must point to `len`
 * writable doubles.
 */
enum IrrStatus irr_model_predict(const struct IrrModel *model,
                                 const struct IrrDataset *data,
                                 double *out,
                                 size_t len);

/**
 * Relaxed objective `yᵀ(K + mλI)⁻¹y` at the solution, or NaN for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
double irr_model_objective(const struct IrrModel *model);

/**
 * Whether the solve reached its gap tolerance; false for NULL.
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
bool irr_model_converged(const struct IrrModel *model);

/**
 * # Safety
 * `model` must be a live handle and `path` a NUL-terminated string.
 */
enum IrrStatus irr_model_save(const struct IrrModel *model, const char *path);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` writable.
 */
enum IrrStatus irr_model_load(const char *path, struct IrrModel **out);

/**
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void irr_model_free(struct IrrModel *model);

/**
 * Rademacher complexity bound for labels bounded by `b` and features by `r`.
 *
 * # Safety
 * `out` must point to a writable double.
 */
enum IrrStatus irr_rademacher_bound(double b,
                                    double r,
                                    double gamma,
                                    double lambda,
                                    size_t d,
                                    size_t m,
                                    double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* IRR_H */
