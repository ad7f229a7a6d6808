#ifndef SADI_H
#define SADI_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every fallible call.
typedef enum SadiStatus {
  SADI_STATUS_OK = 0,
  SADI_STATUS_NULL_POINTER = 1,
  SADI_STATUS_INVALID_ARGUMENT = 2,
  SADI_STATUS_DIMENSION_MISMATCH = 3,
  SADI_STATUS_NON_FINITE = 4,
  SADI_STATUS_UNDEFINED = 5,
  SADI_STATUS_IO = 6,
  SADI_STATUS_PANIC = 7,
} SadiStatus;

// Weighted occupation measure of a trajectory prefix.
typedef struct SadiOccupation SadiOccupation;

// Convex hull of finitely many points.
typedef struct SadiPolytope SadiPolytope;

// Iterates of a stochastic-approximation run.
typedef struct SadiTrajectory SadiTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or NULL. The pointer
// stays valid until the next call into this library on the same thread.
const char *sadi_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *sadi_version(void);

// Builds the hull of `count` generators of dimension `dim`, stored
// row-major in `generators`.
//
// # Safety
// `generators` must point to `count * dim` readable doubles and `out` must
// be writable.
enum SadiStatus sadi_polytope_new(const double *generators,
                                  size_t count,
                                  size_t dim,
                                  struct SadiPolytope **out);

// # Safety
// `p` must be NULL or a handle from [`sadi_polytope_new`] not yet freed.
void sadi_polytope_free(struct SadiPolytope *p);

// Dimension of the ambient space, 0 for NULL.
//
// # Safety
// `p` must be NULL or a live handle.
size_t sadi_polytope_dim(const struct SadiPolytope *p);

// Writes the minimum-norm point of the hull into `out[0..len]`.
//
// # Safety
// `p` must be a live handle and `out` must hold `len` writable doubles.
enum SadiStatus sadi_polytope_min_norm_point(const struct SadiPolytope *p, double *out, size_t len);

// Euclidean distance from `y` to the hull.
//
// # Safety
// `p` must be a live handle, `y` must hold `len` doubles and `out` must be
// writable.
enum SadiStatus sadi_polytope_distance(const struct SadiPolytope *p,
                                       const double *y,
                                       size_t len,
                                       double *out);

// Support function `max_{z ∈ P} ⟨direction, z⟩`.
//
// # Safety
// Same contract as [`sadi_polytope_distance`].
enum SadiStatus sadi_polytope_support(const struct SadiPolytope *p,
                                      const double *direction,
                                      size_t len,
                                      double *out);

// Stochastic subgradient descent on the named function (`abs`, `relu`,
// `quadratic`, `max_of_squares`) with steps `a/(i+1)^rho`, Gaussian noise
// of deviation `sigma` (0 disables it) and random-hull selection.
//
// # Safety
// `function` must be a NUL-terminated string, `x0` must hold `dim` doubles
// and `out` must be writable.
enum SadiStatus sadi_trajectory_run_sgd(const char *function,
                                        size_t dim,
                                        const double *x0,
                                        double a,
                                        double rho,
                                        double sigma,
                                        double guard_radius,
                                        size_t iterations,
                                        uint64_t seed,
                                        struct SadiTrajectory **out);

// Fictitious play on a built-in game (`matching_pennies`, `potential_2x2`,
// `generalized_rps`) from the mixed profile `xi0`.
//
// # Safety
// `game` must be a NUL-terminated string, `xi0` must hold `len` doubles and
// `out` must be writable.
enum SadiStatus sadi_trajectory_run_fictitious_play(const char *game,
                                                    const double *xi0,
                                                    size_t len,
                                                    size_t stages,
                                                    uint64_t seed,
                                                    struct SadiTrajectory **out);

// # Safety
// `t` must be NULL or a trajectory handle not yet freed.
void sadi_trajectory_free(struct SadiTrajectory *t);

// Number of completed steps, 0 for NULL.
//
// # Safety
// `t` must be NULL or a live handle.
size_t sadi_trajectory_len(const struct SadiTrajectory *t);

// State dimension, 0 for NULL.
//
// # Safety
// `t` must be NULL or a live handle.
size_t sadi_trajectory_dim(const struct SadiTrajectory *t);

// True when the run left the guard ball before completing.
//
// # Safety
// `t` must be NULL or a live handle.
bool sadi_trajectory_escaped(const struct SadiTrajectory *t);

// Clock `t_N = Σ ε_i` at the last state, 0 for NULL.
//
// # Safety
// `t` must be NULL or a live handle.
double sadi_trajectory_elapsed(const struct SadiTrajectory *t);

// Copies state `x_index` (0 ≤ index ≤ len) into `out[0..len]`.
//
// # Safety
// `t` must be a live handle and `out` must hold `len` writable doubles.
enum SadiStatus sadi_trajectory_state(const struct SadiTrajectory *t,
                                      size_t index,
                                      double *out,
                                      size_t len);

// Occupation measure of the first `steps` steps; 0 selects the whole run.
//
// # Safety
// `t` must be a live handle and `out` must be writable.
enum SadiStatus sadi_occupation_from_trajectory(const struct SadiTrajectory *t,
                                                size_t steps,
                                                struct SadiOccupation **out);

// # Safety
// `m` must be NULL or an occupation handle not yet freed.
void sadi_occupation_free(struct SadiOccupation *m);

// Number of stored samples, 0 for NULL.
//
// # Safety
// `m` must be NULL or a live handle.
size_t sadi_occupation_len(const struct SadiOccupation *m);

// Sum of the sample weights, 0 for NULL.
//
// # Safety
// `m` must be NULL or a live handle.
double sadi_occupation_total_weight(const struct SadiOccupation *m);

// `∫ ‖v‖^q dμ`.
//
// # Safety
// `m` must be a live handle and `out` writable.
enum SadiStatus sadi_occupation_velocity_moment(const struct SadiOccupation *m,
                                                double q,
                                                double *out);

// Oscillation statistic `∫ v dμ` (weight `ψ ≡ 1`) into `out[0..len]`.
//
// # Safety
// `m` must be a live handle and `out` must hold `len` writable doubles.
enum SadiStatus sadi_occupation_oscillation(const struct SadiOccupation *m,
                                            double *out,
                                            size_t len);

// `∫ ⟨∇g(x), v⟩ dμ` for `g(x) = ½ Σ_k w_k (x_k - c_k)²`.
//
// # Safety
// `m` must be a live handle, `center` and `weights` must hold `len` doubles
// and `out` must be writable.
enum SadiStatus sadi_occupation_closed_residual_quadratic(const struct SadiOccupation *m,
                                                          const double *center,
                                                          const double *weights,
                                                          size_t len,
                                                          double *out);

// Plug-in bandwidth `1.06 σ̂ M^{-1/(4+n)}`.
//
// # Safety
// `m` must be a live handle and `out` writable.
enum SadiStatus sadi_occupation_bandwidth(const struct SadiOccupation *m, double *out);

// Kernel estimate of the centroid field at `x`. Returns
// `SADI_STATUS_UNDEFINED` when no sample lies within five bandwidths.
//
// # Safety
// `m` must be a live handle, `x` must hold `len` doubles and `out` must hold
// `len` writable doubles.
enum SadiStatus sadi_occupation_centroid(const struct SadiOccupation *m,
                                         const double *x,
                                         size_t len,
                                         double bandwidth,
                                         double *out);

// Normalized residence time in the closed ball `B(center, radius)`.
//
// # Safety
// `m` must be a live handle, `center` must hold `len` doubles and `out`
// must be writable.
enum SadiStatus sadi_occupation_residence_ball(const struct SadiOccupation *m,
                                               const double *center,
                                               size_t len,
                                               double radius,
                                               double *out);

// Parses and validates an experiment document. `violations` receives the
// number of violated conditions; their text is available from
// [`sadi_last_error_message`] when non-zero.
//
// # Safety
// `json` must be a NUL-terminated string and `violations` writable.
enum SadiStatus sadi_validate_config(const char *json, size_t *violations);

// Runs an experiment document and writes its artifacts under
// `out_dir/<name>/`. `jobs = 0` uses every core. `bounded_fraction`
// receives the fraction of seeds that stayed inside the guard ball.
//
// # Safety
// `json` and `out_dir` must be NUL-terminated strings and
// `bounded_fraction` writable.
enum SadiStatus sadi_run_experiment(const char *json,
                                    const char *out_dir,
                                    size_t jobs,
                                    double *bounded_fraction);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SADI_H */
