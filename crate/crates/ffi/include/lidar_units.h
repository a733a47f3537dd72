#ifndef LIDAR_UNITS_H
#define LIDAR_UNITS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LuStatus {
  LU_STATUS_OK = 0,
  /**
   * Malformed input or configuration.
   */
  LU_STATUS_VALIDATION = 1,
  /**
   * IO or computation failure.
   */
  LU_STATUS_RUNTIME = 2,
  LU_STATUS_NULL_ARGUMENT = 3,
  /**
   * A Rust panic was caught at the boundary.
   */
  LU_STATUS_PANIC = 4,
} LuStatus;

/**
 * Opaque negative sets.
 */
typedef struct LuNegativeSets LuNegativeSets;

/**
 * Opaque pre-training trace.
 */
typedef struct LuTrace LuTrace;

/**
 * Opaque unit set.
 */
typedef struct LuUnitSet LuUnitSet;

/**
 * Borrowed view of one fused `height x width x channels` feature map,
 * row-major HWC.
 */
typedef struct LuFeatureMapView {
  const float *data;
  size_t height;
  size_t width;
  size_t channels;
  uint32_t scale;
} LuFeatureMapView;

typedef struct LuStepRecord {
  size_t step;
  double loss;
  double contrastive_accuracy;
  double alignment_score;
  size_t units;
} LuStepRecord;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version, a static nul-terminated string.
 */
const char *lu_version(void);

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next library call on the same thread.
 */
const char *lu_last_error_message(void);

/**
 * Releases a string returned by the library. Null is ignored.
 */
void lu_string_free(char *s);

/**
 * Builds contrastive units.
 *
 * `points` is `n_points x 4` (x, y, z, intensity) row-major. `ground_mask`
 * holds one 0/1 byte per point, or null to segment ground with the
 * configured parameters. `config_json` is a run configuration (only the
 * `ground` and `units` sections are used), or null for defaults.
 */
enum LuStatus lu_build_units(const double *points,
                             size_t n_points,
                             const uint8_t *ground_mask,
                             const char *calib_json,
                             const struct LuFeatureMapView *featmaps,
                             size_t n_featmaps,
                             const char *config_json,
                             struct LuUnitSet **out);

/**
 * Ground mask of a cloud with the configured segmentation, one byte per
 * point written to `out_mask` (capacity `n_points`).
 */
enum LuStatus lu_segment_ground(const double *points,
                                size_t n_points,
                                const char *config_json,
                                uint8_t *out_mask);

enum LuStatus lu_unit_set_len(const struct LuUnitSet *set, size_t *out);

enum LuStatus lu_unit_set_image_dim(const struct LuUnitSet *set, size_t *out);

/**
 * Copies the `B x image_dim` image features into `out` (capacity `cap`).
 */
enum LuStatus lu_unit_set_image_features(const struct LuUnitSet *set, double *out, size_t cap);

/**
 * Copies the `B x 10` point statistics into `out` (capacity `cap`).
 */
enum LuStatus lu_unit_set_point_stats(const struct LuUnitSet *set, double *out, size_t cap);

/**
 * Number of member points of unit `index`.
 */
enum LuStatus lu_unit_set_member_count(const struct LuUnitSet *set, size_t index, size_t *out);

/**
 * Copies the ascending member indices of unit `index` into `out`.
 */
enum LuStatus lu_unit_set_members(const struct LuUnitSet *set,
                                  size_t index,
                                  size_t *out,
                                  size_t cap);

/**
 * The unit set as JSON, identical to the CLI `units` output. Release with
 * [`lu_string_free`].
 */
enum LuStatus lu_unit_set_to_json(const struct LuUnitSet *set, char **out);

void lu_unit_set_free(struct LuUnitSet *set);

/**
 * Similarity-balanced negative sets over `rows x dim` image features.
 * `budget` 0 selects the default of half the batch.
 */
enum LuStatus lu_negative_sets(const double *features,
                               size_t rows,
                               size_t dim,
                               size_t budget,
                               struct LuNegativeSets **out);

/**
 * Negative sets from explicit lists in CSR layout: set `i` is
 * `indices[offsets[i]..offsets[i + 1]]`, so `offsets` has `rows + 1`
 * entries.
 */
enum LuStatus lu_negative_sets_from_lists(const size_t *offsets,
                                          const size_t *indices,
                                          size_t rows,
                                          struct LuNegativeSets **out);

enum LuStatus lu_negative_sets_len(const struct LuNegativeSets *sets, size_t *out);

enum LuStatus lu_negative_sets_set_len(const struct LuNegativeSets *sets,
                                       size_t index,
                                       size_t *out);

/**
 * Copies the ascending indices of set `index` into `out`.
 */
enum LuStatus lu_negative_sets_get(const struct LuNegativeSets *sets,
                                   size_t index,
                                   size_t *out,
                                   size_t cap);

void lu_negative_sets_free(struct LuNegativeSets *sets);

/**
 * Bidirectional InfoNCE over `rows x dim` point and image features. The
 * gradient buffers (each `rows x dim`) may be null when not wanted.
 */
enum LuStatus lu_infonce(const double *point,
                         const double *image,
                         size_t rows,
                         size_t dim,
                         const struct LuNegativeSets *sets,
                         double tau,
                         double *out_value,
                         double *grad_point,
                         double *grad_image);

/**
 * Runs pre-training from a run configuration (null for defaults).
 */
enum LuStatus lu_run_pretrain(const char *config_json, struct LuTrace **out);

enum LuStatus lu_trace_len(const struct LuTrace *trace, size_t *out);

enum LuStatus lu_trace_record(const struct LuTrace *trace, size_t index, struct LuStepRecord *out);

/**
 * The trace as JSON lines, identical to the CLI `trace.jsonl`.
 */
enum LuStatus lu_trace_to_jsonl(const struct LuTrace *trace, char **out);

void lu_trace_free(struct LuTrace *trace);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LIDAR_UNITS_H */
