#ifndef BQCI_H
#define BQCI_H

/* Generated by cbindgen; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Differential and projection operators accepted by `bqci_field_apply`.
typedef enum BqciOp {
  BQCI_OP_GRADIENT = 0,
  BQCI_OP_DIVERGENCE = 1,
  BQCI_OP_CURL = 2,
  BQCI_OP_LAPLACIAN = 3,
  BQCI_OP_INVERSE_LAPLACIAN = 4,
  BQCI_OP_LERAY_PROJECT = 5,
  // symmetric traceless R with div R = f, for zero-mean vector f
  BQCI_OP_INVERSE_DIVERGENCE = 6,
} BqciOp;

// Field rank tags, matching the snapshot format.
typedef enum BqciRank {
  BQCI_RANK_SCALAR = 0,
  BQCI_RANK_VECTOR = 1,
  BQCI_RANK_SYM_TENSOR = 2,
} BqciRank;

typedef enum BqciStatus {
  BQCI_STATUS_OK = 0,
  BQCI_STATUS_NULL_POINTER = 1,
  BQCI_STATUS_INVALID_ARGUMENT = 2,
  BQCI_STATUS_INVALID_PARAMETER = 3,
  BQCI_STATUS_CONFIG = 4,
  BQCI_STATUS_GRID_MISMATCH = 5,
  BQCI_STATUS_RANK_MISMATCH = 6,
  BQCI_STATUS_NONZERO_MEAN = 7,
  BQCI_STATUS_UNRESOLVED_MOLLIFIER = 8,
  BQCI_STATUS_TIME_OUT_OF_RANGE = 9,
  BQCI_STATUS_PLACEMENT_FAILURE = 10,
  BQCI_STATUS_ADMISSIBILITY = 11,
  BQCI_STATUS_ENERGY_GAP = 12,
  BQCI_STATUS_BLOW_UP = 13,
  BQCI_STATUS_NUMERICAL = 14,
  BQCI_STATUS_FORMAT = 15,
  BQCI_STATUS_IO = 16,
  BQCI_STATUS_JSON = 17,
  // a run finished but at least one check failed
  BQCI_STATUS_CHECK_FAILED = 18,
  BQCI_STATUS_PANIC = 99,
} BqciStatus;

typedef struct BqciField BqciField;

typedef struct BqciMikado BqciMikado;

typedef struct BqciSchedule BqciSchedule;

// Plain copy of one stage of the parameter schedule. `big_m` is NaN when unset.
typedef struct BqciStageParams {
  uint32_t q;
  double alpha;
  double lambda_q;
  double delta_q;
  double lambda_next;
  double delta_next;
  double delta_next2;
  double l;
  double tau_q;
  double big_m1;
  double small_m1;
  double c0;
  double big_m;
} BqciStageParams;

// Outcome of a pipeline run. `status`: 0 completed, 1 gate abort, 2 error.
typedef struct BqciRunSummary {
  int32_t status;
  uint32_t stage_reached;
  uint32_t failed_checks;
} BqciRunSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copy the last error message of this thread into `buf` (NUL-terminated, truncated to
// `len`). Returns the full message length excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t bqci_last_error(char *buf, uintptr_t len);

// Library version as a static NUL-terminated string.
const char *bqci_version(void);

// Parse a TOML run configuration and build its parameter schedule.
//
// # Safety
// `toml` must be a valid C string; `out` a valid pointer.
enum BqciStatus bqci_schedule_from_toml(const char *toml, struct BqciSchedule **out);

// # Safety
// `s` must be a live schedule handle; `out` a valid pointer.
enum BqciStatus bqci_schedule_stage_count(const struct BqciSchedule *s, uintptr_t *out);

// # Safety
// `s` must be a live schedule handle; `out` a valid pointer.
enum BqciStatus bqci_schedule_stage(const struct BqciSchedule *s,
                                    uintptr_t q,
                                    struct BqciStageParams *out);

// # Safety
// `s` must be null or a handle from `bqci_schedule_from_toml`, not yet freed.
void bqci_schedule_free(struct BqciSchedule *s);

// Build a field on the n^3 grid from real samples, component-major: component c, point
// (ix*n + iy)*n + iz sits at `data[c*n^3 + (ix*n + iy)*n + iz]`.
//
// # Safety
// `data` must point to `len` readable doubles; `out` a valid pointer.
enum BqciStatus bqci_field_from_samples(uintptr_t n,
                                        enum BqciRank rank,
                                        const double *data,
                                        uintptr_t len,
                                        struct BqciField **out);

// Number of doubles `bqci_field_samples` writes.
//
// # Safety
// `f` must be a live field handle; `out` a valid pointer.
enum BqciStatus bqci_field_sample_count(const struct BqciField *f, uintptr_t *out);

// Write real samples in the layout of `bqci_field_from_samples`.
//
// # Safety
// `data` must point to `len` writable doubles.
enum BqciStatus bqci_field_samples(const struct BqciField *f, double *data, uintptr_t len);

// # Safety
// `f` must be a live field handle; `n`, `rank` valid pointers.
enum BqciStatus bqci_field_shape(const struct BqciField *f, uintptr_t *n, enum BqciRank *rank);

// # Safety
// `f` must be null or a field handle not yet freed.
void bqci_field_free(struct BqciField *f);

// Apply `op` to `f`, returning a new field.
//
// # Safety
// `f` must be a live field handle; `out` a valid pointer.
enum BqciStatus bqci_field_apply(const struct BqciField *f, enum BqciOp op, struct BqciField **out);

// Space mollification at scale `l`.
//
// # Safety
// `f` must be a live field handle; `out` a valid pointer.
enum BqciStatus bqci_field_mollify(const struct BqciField *f, double l, struct BqciField **out);

// L2 norm over the torus (volume (2pi)^3 included) and sup over the grid.
//
// # Safety
// `f` must be a live field handle; `l2`, `sup` valid pointers.
enum BqciStatus bqci_field_norms(const struct BqciField *f, double *l2, double *sup);

// Build (and place) a Mikado family with tube radius `radius` and spectral cutoff `k_max`.
//
// # Safety
// `out` must be a valid pointer.
enum BqciStatus bqci_mikado_build(double radius,
                                  uintptr_t k_max,
                                  uint64_t seed,
                                  struct BqciMikado **out);

// Amplitudes Gamma_j(R) for a symmetric R given as (11, 22, 33, 12, 23, 13).
//
// # Safety
// `r` must point to 6 readable doubles and `gamma` to 6 writable ones.
enum BqciStatus bqci_mikado_amplitudes(const struct BqciMikado *m, const double *r, double *gamma);

// Sample W(R, xi) on the n^3 grid.
//
// # Safety
// `r` must point to 6 readable doubles; `out` a valid pointer.
enum BqciStatus bqci_mikado_field(const struct BqciMikado *m,
                                  const double *r,
                                  uintptr_t n,
                                  struct BqciField **out);

// Radius of the ball around the identity on which the amplitudes are defined.
//
// # Safety
// `m` must be a live handle; `out` a valid pointer.
enum BqciStatus bqci_mikado_admissible_radius(const struct BqciMikado *m, double *out);

// # Safety
// `m` must be null or a handle not yet freed.
void bqci_mikado_free(struct BqciMikado *m);

// Run the full iteration for a TOML configuration, writing artifacts under `out_dir`
// (null keeps everything in memory). `stages` = 0 runs up to q_max.
//
// A gate abort still returns `Ok` with `summary.status = 1`; failed checks return
// `CheckFailed` with the summary filled in.
//
// # Safety
// `toml` must be a valid C string, `out_dir` null or a valid C string, `summary` a valid
// pointer.
enum BqciStatus bqci_run(const char *toml,
                         const char *out_dir,
                         uint32_t stages,
                         struct BqciRunSummary *summary);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* BQCI_H */
