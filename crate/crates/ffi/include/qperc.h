#ifndef QPERC_H
#define QPERC_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/*
 Result code of every fallible call.
 */
typedef enum QpStatus {
  QP_STATUS_OK = 0,
  QP_STATUS_NULL_POINTER = 1,
  QP_STATUS_INVALID_ARGUMENT = 2,
  QP_STATUS_OUT_OF_RANGE = 3,
  QP_STATUS_CAPACITY = 4,
  QP_STATUS_VALIDATION = 5,
  QP_STATUS_METHOD = 6,
  QP_STATUS_IO = 7,
  QP_STATUS_PANIC = 8,
  QP_STATUS_INTERNAL = 9,
} QpStatus;

/*
 Noise channel selector for [`qp_density_apply_noise`].
 */
typedef enum QpNoise {
  /*
   Computational-basis collapse with probability `strength`.
   */
  QP_NOISE_COLLAPSE = 0,
  /*
   Replacement by the maximally mixed state with probability `strength`.
   */
  QP_NOISE_DEPOLARIZE = 1,
  /*
   Coherence damping by `exp(-strength)`.
   */
  QP_NOISE_DEPHASE = 2,
} QpNoise;

/*
 Opaque density matrix.
 */
typedef struct QpDensity QpDensity;

/*
 Opaque percolation lattice.
 */
typedef struct QpLattice QpLattice;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message for the last failed call on this thread; empty after a success.
 The pointer stays valid until the next call on the same thread.
 */
const char *qp_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *qp_version(void);

/*
 Build the contracted percolation lattice of a `sides[0] x ... x
 sides[dim-1]` register run for `steps` steps.

 # Safety
 `sides` must point to `dim` values and `out` must be writable.
 */
enum QpStatus qp_lattice_new(const size_t *sides,
                             size_t dim,
                             size_t steps,
                             struct QpLattice **out_lattice);

/*
 Release a lattice; null is ignored.

 # Safety
 `lattice` must come from [`qp_lattice_new`] and not be used afterwards.
 */
void qp_lattice_free(struct QpLattice *lattice);

/*
 Node and percolation-edge counts.

 # Safety
 `lattice` must be a live handle; the outputs must be writable.
 */
enum QpStatus qp_lattice_size(const struct QpLattice *lattice,
                              size_t *out_nodes,
                              size_t *out_edges);

/*
 Node holding `particle` at time `t`.

 # Safety
 `lattice` must be a live handle; `out_node` must be writable.
 */
enum QpStatus qp_lattice_node_of(const struct QpLattice *lattice,
                                 size_t particle,
                                 size_t t,
                                 size_t *out_node);

/*
 Estimate connection probabilities for `npairs` node pairs given as
 `pairs[2k], pairs[2k+1]`. `out_tau` receives `npairs` values;
 `out_stderr` and `out_hits` may be null.

 # Safety
 All non-null pointers must reference arrays of the stated lengths.
 */
enum QpStatus qp_tau_estimate(const struct QpLattice *lattice,
                              double p,
                              const size_t *pairs,
                              size_t npairs,
                              uint64_t samples,
                              uint64_t seed,
                              double *out_tau,
                              double *out_stderr,
                              uint64_t *out_hits);

/*
 Check cluster dynamics against percolation connectivity for one noise
 pattern. `open` holds `n * steps` bytes, nonzero for an open edge
 `t * n + x`. `giant` selects the single-cluster start.

 # Safety
 `sides` must hold `dim` values, `open` the stated number of bytes.
 */
enum QpStatus qp_verify_correspondence(const size_t *sides,
                                       size_t dim,
                                       size_t steps,
                                       const uint8_t *open,
                                       size_t open_len,
                                       bool giant,
                                       bool *out_holds);

/*
 `|0...0><0...0|` on `qubits` qubits.

 # Safety
 `out_density` must be writable.
 */
enum QpStatus qp_density_zero(size_t qubits, struct QpDensity **out_density);

/*
 Validated density matrix from `2 * 4^qubits` row-major `(re, im)` pairs.

 # Safety
 `re_im` must hold `re_im_len` doubles; `out_density` must be writable.
 */
enum QpStatus qp_density_from_entries(size_t qubits,
                                      const double *re_im,
                                      size_t re_im_len,
                                      struct QpDensity **out_density);

/*
 Read the binary density-matrix format.

 # Safety
 `path` must be a NUL-terminated string; `out_density` must be writable.
 */
enum QpStatus qp_density_read(const char *path_c, struct QpDensity **out_density);

/*
 Write the binary density-matrix format.

 # Safety
 `density` must be live; `path` must be a NUL-terminated string.
 */
enum QpStatus qp_density_write(const struct QpDensity *density, const char *path_c);

/*
 Release a density matrix; null is ignored.

 # Safety
 `density` must come from a `qp_density_*` constructor and not be used
 afterwards.
 */
void qp_density_free(struct QpDensity *density);

/*
 Number of qubits.

 # Safety
 `density` must be live; `out_qubits` must be writable.
 */
enum QpStatus qp_density_qubits(const struct QpDensity *density, size_t *out_qubits);

/*
 Copy the entries as row-major `(re, im)` pairs into `re_im`, which must
 hold `2 * 4^qubits` doubles.

 # Safety
 `re_im` must hold `re_im_len` doubles.
 */
enum QpStatus qp_density_entries(const struct QpDensity *density, double *re_im, size_t re_im_len);

/*
 Apply a 2x2 unitary (row-major `(re, im)`, 8 doubles) to `qubit`.

 # Safety
 `density` must be live; `u_re_im` must hold 8 doubles.
 */
enum QpStatus qp_density_apply_single(struct QpDensity *density,
                                      size_t qubit,
                                      const double *u_re_im);

/*
 Apply a 4x4 unitary (row-major `(re, im)`, 32 doubles) to `(q0, q1)`,
 `q0` being the more significant index bit.

 # Safety
 `density` must be live; `u_re_im` must hold 32 doubles.
 */
enum QpStatus qp_density_apply_two(struct QpDensity *density,
                                   size_t q0,
                                   size_t q1,
                                   const double *u_re_im);

/*
 Apply a single-qubit noise channel.

 # Safety
 `density` must be live.
 */
enum QpStatus qp_density_apply_noise(struct QpDensity *density,
                                     enum QpNoise model,
                                     double strength,
                                     size_t qubit);

/*
 Reduced state on `subset` (in the given order) as a new handle.

 # Safety
 `density` must be live; `subset` must hold `k` values; `out_density`
 must be writable.
 */
enum QpStatus qp_density_reduce(const struct QpDensity *density,
                                const size_t *subset,
                                size_t k,
                                struct QpDensity **out_density);

/*
 Closed-form entanglement of formation (ebits) of a two-qubit state.

 # Safety
 `density` must be live; `out_value` must be writable.
 */
enum QpStatus qp_eof_two_qubit(const struct QpDensity *density, double *out_value);

/*
 Survival to `depth` generations of the Binomial(3, p) branching process.

 # Safety
 `out_value` must be writable.
 */
enum QpStatus qp_branching_survival(double p, size_t depth, double *out_value);

/*
 Entanglement bound between sets of `size_a` and `size_b` qubits at
 `distance`, given correlation length `xi`. With `giant` the correction
 for a single-cluster start at time `t` on `n` particles is added.

 # Safety
 `out_value` must be writable.
 */
enum QpStatus qp_theorem1_bound(size_t size_a,
                                size_t size_b,
                                double distance,
                                double xi,
                                bool giant,
                                double t,
                                size_t n,
                                double *out_value);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QPERC_H */
