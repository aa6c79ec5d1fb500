#ifndef MULTIDML_H
#define MULTIDML_H

/* Generated by cbindgen; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible entry point.
 */
typedef enum MdmlStatus {
  MDML_STATUS_OK = 0,
  /**
   * Null pointer or invalid argument at the boundary.
   */
  MDML_STATUS_INVALID_ARGUMENT = 1,
  /**
   * Configuration or data-schema violation.
   */
  MDML_STATUS_CONFIG_ERROR = 2,
  /**
   * Estimation failure.
   */
  MDML_STATUS_ESTIMATION_ERROR = 3,
  /**
   * I/O failure.
   */
  MDML_STATUS_IO_ERROR = 4,
  /**
   * Unexpected internal failure (panic caught at the boundary).
   */
  MDML_STATUS_INTERNAL_ERROR = 5,
} MdmlStatus;

/**
 * A loaded dataset plus its analysis configuration.
 */
typedef struct MdmlDataset MdmlDataset;

/**
 * An estimation result.
 */
typedef struct MdmlReport MdmlReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message describing the most recent failure on this thread. The
 * pointer stays valid until the next failing call on the same thread.
 */
const char *mdml_last_error(void);

/**
 * Library version as a static string.
 */
const char *mdml_version(void);

/**
 * Loads a CSV dataset under the given TOML analysis config. On success
 * writes an owned handle into `out`; free it with
 * [`mdml_dataset_free`].
 *
 * # Safety
 * `data_path` and `config_path` must be valid NUL-terminated strings
 * and `out` a valid pointer.
 */
enum MdmlStatus mdml_dataset_load(const char *data_path,
                                  const char *config_path,
                                  struct MdmlDataset **out);

/**
 * Number of observations in a loaded dataset.
 *
 * # Safety
 * `ds` must be a live handle from [`mdml_dataset_load`].
 */
uint64_t mdml_dataset_n_obs(const struct MdmlDataset *ds);

/**
 * Frees a dataset handle (NULL is ignored).
 *
 * # Safety
 * `ds` must be NULL or a handle from [`mdml_dataset_load`], not freed
 * before.
 */
void mdml_dataset_free(struct MdmlDataset *ds);

/**
 * Partial-linear-model estimate with the dataset's configured
 * learners. `k = 0` and `n_splits = 0` fall back to the config values.
 *
 * # Safety
 * `ds` must be a live dataset handle and `out` a valid pointer; free
 * the result with [`mdml_report_free`].
 */
enum MdmlStatus mdml_plm_estimate(const struct MdmlDataset *ds,
                                  uint32_t k,
                                  uint32_t n_splits,
                                  uint64_t seed,
                                  struct MdmlReport **out);

/**
 * Interactive-model AIPW estimate of the ATE between regimen
 * categories `arm_b` and `arm_c` (1-based).
 *
 * # Safety
 * Same contract as [`mdml_plm_estimate`].
 */
enum MdmlStatus mdml_irm_estimate(const struct MdmlDataset *ds,
                                  uint32_t arm_b,
                                  uint32_t arm_c,
                                  uint32_t k,
                                  uint32_t n_splits,
                                  uint64_t seed,
                                  struct MdmlReport **out);

/**
 * Number of coefficients in a report.
 *
 * # Safety
 * `report` must be a live report handle.
 */
uint64_t mdml_report_len(const struct MdmlReport *report);

/**
 * Point estimate of coefficient `index`.
 *
 * # Safety
 * `report` must be a live report handle, `out` a valid pointer.
 */
enum MdmlStatus mdml_report_coefficient(const struct MdmlReport *report,
                                        uint64_t index,
                                        double *out);

/**
 * Standard error of coefficient `index`.
 *
 * # Safety
 * Same contract as [`mdml_report_coefficient`].
 */
enum MdmlStatus mdml_report_standard_error(const struct MdmlReport *report,
                                           uint64_t index,
                                           double *out);

/**
 * 95% confidence bounds of coefficient `index`.
 *
 * # Safety
 * Same contract as [`mdml_report_coefficient`].
 */
enum MdmlStatus mdml_report_ci95(const struct MdmlReport *report,
                                 uint64_t index,
                                 double *low,
                                 double *high);

/**
 * Name of coefficient `index`; the pointer lives as long as the
 * report handle. Returns NULL on bad input.
 *
 * # Safety
 * `report` must be a live report handle.
 */
const char *mdml_report_coefficient_name(const struct MdmlReport *report, uint64_t index);

/**
 * Whole report serialized as JSON; free with [`mdml_string_free`].
 *
 * # Safety
 * `report` must be a live report handle.
 */
char *mdml_report_json(const struct MdmlReport *report);

/**
 * Frees a string returned by [`mdml_report_json`].
 *
 * # Safety
 * `s` must be NULL or a pointer obtained from this library.
 */
void mdml_string_free(char *s);

/**
 * Frees a report handle (NULL is ignored).
 *
 * # Safety
 * `report` must be NULL or a handle from an estimate call, not freed
 * before.
 */
void mdml_report_free(struct MdmlReport *report);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MULTIDML_H */
