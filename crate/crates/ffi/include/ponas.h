#ifndef PONAS_FFI_H
#define PONAS_FFI_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum PonasMetric {
  PONAS_METRIC_FLOPS = 0,
  PONAS_METRIC_PARAMS = 1,
} PonasMetric;

typedef enum PonasSelection {
  PONAS_SELECTION_POOLED = 0,
  PONAS_SELECTION_PARENTS_ONLY = 1,
} PonasSelection;

/**
 * Result code of every fallible call.
 */
typedef enum PonasStatus {
  PONAS_STATUS_OK = 0,
  PONAS_STATUS_NULL_POINTER = 1,
  PONAS_STATUS_INVALID_ARGUMENT = 2,
  PONAS_STATUS_INFEASIBLE = 3,
  PONAS_STATUS_IO = 4,
  PONAS_STATUS_VALIDATION = 5,
  PONAS_STATUS_PANIC = 99,
} PonasStatus;

/**
 * Opaque accuracy table.
 */
typedef struct PonasAccuracyTable PonasAccuracyTable;

/**
 * Opaque per-layer block cost table.
 */
typedef struct PonasCostTable PonasCostTable;

/**
 * Opaque accuracy-loss table.
 */
typedef struct PonasLossTable PonasLossTable;

/**
 * Opaque outcome of a search.
 */
typedef struct PonasSpecialization PonasSpecialization;

typedef struct PonasCost {
  uint64_t flops;
  uint64_t params;
} PonasCost;

/**
 * Genetic-search settings. Start from [`ponas_ga_config_default`].
 */
typedef struct PonasGaConfig {
  uint32_t population;
  uint32_t generations;
  double mutation_prob;
  uint64_t seed;
  uint32_t repair_attempts;
  enum PonasSelection selection;
} PonasGaConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the last failure on this thread, or NULL. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *ponas_last_error_message(void);

/**
 * Version of the engine as a static NUL-terminated string.
 */
const char *ponas_version(void);

/**
 * # Safety
 * `s` must be NULL or a string returned by this library and not yet freed.
 */
void ponas_string_free(char *s);

/**
 * Parses an accuracy table document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum PonasStatus ponas_accuracy_table_from_json(const char *json, struct PonasAccuracyTable **out);

/**
 * Runs the layer-by-layer table construction against the built-in
 * synthetic evaluator. `threads == 0` uses all cores.
 *
 * # Safety
 * `out` must be writable. `best_genes` may be NULL, otherwise it must have
 * room for the number of searchable layers (19).
 */
enum PonasStatus ponas_accuracy_table_build_synthetic(uint64_t seed,
                                                      size_t threads,
                                                      struct PonasAccuracyTable **out,
                                                      uint32_t *best_genes);

/**
 * Synthetic table with the peaked profile.
 *
 * # Safety
 * `out` must be writable.
 */
enum PonasStatus ponas_accuracy_table_synthetic(uint64_t seed,
                                                size_t layers,
                                                size_t candidates,
                                                struct PonasAccuracyTable **out);

/**
 * # Safety
 * `table` must be a live handle; `layers` and `candidates` writable.
 */
enum PonasStatus ponas_accuracy_table_dims(const struct PonasAccuracyTable *table,
                                           size_t *layers,
                                           size_t *candidates);

/**
 * # Safety
 * `table` must be a live handle; `out` writable.
 */
enum PonasStatus ponas_accuracy_table_get(const struct PonasAccuracyTable *table,
                                          size_t layer,
                                          size_t candidate,
                                          double *out);

/**
 * Serializes the table; free the result with [`ponas_string_free`].
 *
 * # Safety
 * `table` must be a live handle; `out` writable.
 */
enum PonasStatus ponas_accuracy_table_to_json(const struct PonasAccuracyTable *table, char **out);

/**
 * # Safety
 * `table` must be a live handle; `out` writable.
 */
enum PonasStatus ponas_accuracy_table_to_loss(const struct PonasAccuracyTable *table,
                                              struct PonasLossTable **out);

/**
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void ponas_accuracy_table_free(struct PonasAccuracyTable *table);

/**
 * Parses a table document; accuracy tables are converted to the loss domain.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum PonasStatus ponas_loss_table_from_json(const char *json, struct PonasLossTable **out);

/**
 * # Safety
 * `table` must be a live handle; `out` writable.
 */
enum PonasStatus ponas_loss_table_get(const struct PonasLossTable *table,
                                      size_t layer,
                                      size_t candidate,
                                      double *out);

/**
 * Writes the maximum loss of each layer into `out` (capacity `cap`) and
 * the number of layers into `len`. Fails if `cap` is too small.
 *
 * # Safety
 * `table` must be a live handle; `out` must have room for `cap` values.
 */
enum PonasStatus ponas_loss_table_importance(const struct PonasLossTable *table,
                                             double *out,
                                             size_t cap,
                                             size_t *len);

/**
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void ponas_loss_table_free(struct PonasLossTable *table);

/**
 * Parses a `ponas-cost-table-v1` document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum PonasStatus ponas_cost_table_from_json(const char *json, struct PonasCostTable **out);

/**
 * # Safety
 * `table` must be NULL or a handle not yet freed.
 */
void ponas_cost_table_free(struct PonasCostTable *table);

/**
 * FLOPs and parameters of a gene vector on the built-in macro-architecture.
 *
 * # Safety
 * `genes` must point to `len` values; `out` writable.
 */
enum PonasStatus ponas_architecture_cost(const uint32_t *genes, size_t len, struct PonasCost *out);

struct PonasGaConfig ponas_ga_config_default(void);

/**
 * Genetic search. `costs` may be NULL to price networks with the built-in
 * macro-architecture; `config` may be NULL for the defaults.
 *
 * # Safety
 * Handles must be live; `out` writable.
 */
enum PonasStatus ponas_specialize(const struct PonasLossTable *loss,
                                  const struct PonasCostTable *costs,
                                  enum PonasMetric metric_kind,
                                  uint64_t ceiling,
                                  const struct PonasGaConfig *config,
                                  struct PonasSpecialization **out);

/**
 * Exhaustive search over small spaces. `costs` may be NULL as in
 * [`ponas_specialize`]. Writes the optimal genes into `genes` (capacity
 * `cap`), their count into `len` and the total loss into `loss_out`.
 *
 * # Safety
 * Handles must be live; output pointers writable with the stated capacity.
 */
enum PonasStatus ponas_brute_force(const struct PonasLossTable *loss,
                                   const struct PonasCostTable *costs,
                                   enum PonasMetric metric_kind,
                                   uint64_t ceiling,
                                   uint32_t *genes,
                                   size_t cap,
                                   size_t *len,
                                   double *loss_out);

/**
 * Best chromosome found. `len` receives the gene count even when `cap` is
 * too small, so callers can size the buffer with a first call.
 *
 * # Safety
 * `result` must be a live handle; `genes` must have room for `cap` values.
 */
enum PonasStatus ponas_specialization_genes(const struct PonasSpecialization *result,
                                            uint32_t *genes,
                                            size_t cap,
                                            size_t *len);

/**
 * # Safety
 * `result` must be a live handle; `loss` and `cost` writable.
 */
enum PonasStatus ponas_specialization_summary(const struct PonasSpecialization *result,
                                              double *loss,
                                              struct PonasCost *cost);

/**
 * Per-generation best and mean loss. Either buffer may be NULL.
 *
 * # Safety
 * `result` must be a live handle; non-NULL buffers need room for `cap`.
 */
enum PonasStatus ponas_specialization_curve(const struct PonasSpecialization *result,
                                            double *best,
                                            double *mean,
                                            size_t cap,
                                            size_t *len);

/**
 * # Safety
 * `result` must be NULL or a handle not yet freed.
 */
void ponas_specialization_free(struct PonasSpecialization *result);

/**
 * Kendall's tau-b of two samples of length `n`.
 *
 * # Safety
 * `xs` and `ys` must point to `n` values; `out` writable.
 */
enum PonasStatus ponas_kendall_tau(const double *xs, const double *ys, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* PONAS_FFI_H */
