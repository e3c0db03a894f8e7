/* C interface to the symlms shared library: symmetric-transform estimation
 * for anonymized (set-valued) linear-system observations.
 *
 * Conventions: matrices are row-major double arrays; a member collection is
 * L rows of length D. Every function returns a symlms_status; on error,
 * symlms_last_error() describes the failure for the calling thread.
 */
#ifndef SYMLMS_H
#define SYMLMS_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum symlms_status {
  SYMLMS_OK = 0,
  SYMLMS_ERR_INVALID_ARGUMENT = 1,
  SYMLMS_ERR_ILL_CONDITIONED = 2,
  SYMLMS_ERR_REPEATED_ROOT = 3,
  SYMLMS_ERR_DIVERGED = 4,
  SYMLMS_ERR_PARSE = 5,
  SYMLMS_ERR_IO = 6,
  SYMLMS_ERR_TARGET_MISSED = 7,
  SYMLMS_ERR_INTERNAL = 8
} symlms_status;

const char* symlms_version(void);

/* Message for the most recent failure on this thread. */
const char* symlms_last_error(void);

/* ------------------------------------------------------------------ */
/* Symmetric-transform algebra on flat arrays                          */

/* Length of the degree-l coefficient block: l*(D-1)+1. */
int symlms_block_length(int L, int D, int degree);
/* Total length of all blocks, degrees 1..L. */
int symlms_transform_length(int L, int D);

/* Concatenated coefficient blocks (degrees 1..L) of the row collection.
 * out must hold symlms_transform_length(L, D) doubles. */
symlms_status symlms_full_transform(const double* members, int L, int D, double* out);

/* Element-wise transform: D blocks of length L (component-major). */
symlms_status symlms_naive_transform(const double* members, int L, int D, double* out);

/* Factors of the monic polynomial with the given coefficients; theta gets the
 * L real parts ascending; had_complex is set when roots left the real line. */
symlms_status symlms_invert_scalar(const double* lambda, int L, double* theta, int* had_complex);

/* Invert concatenated blocks back to the member matrix (L rows of D,
 * canonical order). max_condition may be NULL. */
symlms_status symlms_invert_vector(const double* blocks, int L, int D, double* theta,
                                   int* had_complex, double* max_condition);

/* Jacobian of the scalar inversion: jac[(m-1)*L + (l-1)] = d theta_l / d lambda_m. */
symlms_status symlms_root_sensitivity(const double* theta, int L, double* jac);

/* Unique symmetric solution of Q S + S Q = R (Q symmetric positive definite),
 * n x n row-major. */
symlms_status symlms_lyapunov_solve(const double* q, const double* r, int n, double* sigma);

/* ------------------------------------------------------------------ */
/* Opaque simulator and filter handles                                 */

typedef struct symlms_sim symlms_sim;

/* config_json holds the experiment "system" / "perm" / "hyper" sections (see
 * README); seed selects the stream. */
symlms_status symlms_sim_create(const char* config_json, uint64_t seed, symlms_sim** out);
/* One step: psi is D*D, y_set is L*D, row-major. Either may be NULL. */
symlms_status symlms_sim_next(symlms_sim* sim, double* psi, double* y_set);
void symlms_sim_destroy(symlms_sim* sim);

typedef struct symlms_filter symlms_filter;

/* config_json is one entry of the "filters" array (mode, eps, init, ...). */
symlms_status symlms_filter_create(const char* config_json, int L, int D, symlms_filter** out);
symlms_status symlms_filter_step(symlms_filter* filter, const double* psi, const double* y_set);
/* Labeled step for the classical baseline: perm[r] is the system of row r. */
symlms_status symlms_filter_step_labeled(symlms_filter* filter, const double* psi,
                                         const double* y_set, const int* perm);
/* Canonical-order estimate, L*D row-major. */
symlms_status symlms_filter_estimate(symlms_filter* filter, double* theta);
/* Flattened coefficient state; pass n = capacity, receives length. */
symlms_status symlms_filter_coefficients(symlms_filter* filter, double* coeffs, int* n);
void symlms_filter_destroy(symlms_filter* filter);

/* ------------------------------------------------------------------ */
/* Experiment runner                                                   */

/* Full config for a preset experiment; caller frees with symlms_string_free. */
symlms_status symlms_preset(const char* name, char** config_json);

/* Run a config (task: simulate | fit | analyze | reproduce). Artifacts are
 * written under out_dir; the summary JSON is returned in result_json (caller
 * frees). Returns SYMLMS_ERR_TARGET_MISSED when a reproduce target fails. */
symlms_status symlms_run(const char* config_json, const char* out_dir, char** result_json);

void symlms_string_free(char* s);

#ifdef __cplusplus
}
#endif

#endif /* SYMLMS_H */
