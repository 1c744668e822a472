/* C interface for the singletbb spin-dynamics library.
 *
 * Conventions:
 *   - Constructors return an opaque handle, or NULL on failure.
 *   - Functions returning int32_t use 0 (SBB_OK) for success and a negative
 *     SBB_ERR_* code on failure.
 *   - After any failure, sbb_last_error_message() returns a thread-local,
 *     NUL-terminated description, valid until the next failing call on the
 *     same thread.
 *   - Strings returned by the library are released with sbb_string_free();
 *     handles with their matching *_free(). All free functions accept NULL.
 */

#ifndef SINGLETBB_H
#define SINGLETBB_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Error codes. */
#define SBB_OK 0
#define SBB_ERR_ARGUMENT (-1)
#define SBB_ERR_PARSE (-2)
#define SBB_ERR_NUMERIC (-3)
#define SBB_ERR_IO (-4)
#define SBB_ERR_PANIC (-5)

/* Fit models for sbb_fit_monoexponential. */
#define SBB_FIT_DECAY 0
#define SBB_FIT_INVERSION 1

/* Opaque handles. */
typedef struct SbbConfig SbbConfig;
typedef struct SbbSystem SbbSystem;
typedef struct SbbCache SbbCache;
typedef struct SbbSequence SbbSequence;

/* Error reporting. */
const char *sbb_last_error_message(void);
void sbb_string_free(char *s);

/* Run configuration (TOML text, same schema as the CLI). */
SbbConfig *sbb_config_parse(const char *text);
SbbConfig *sbb_config_load(const char *path);
void sbb_config_free(SbbConfig *cfg);

/* Spin system built from a config's [system] and [polarization] sections. */
SbbSystem *sbb_system_build(const SbbConfig *cfg);
void sbb_system_free(SbbSystem *sys);
int64_t sbb_system_dim(const SbbSystem *sys);     /* dimension, or < 0 */
int64_t sbb_system_nspins(const SbbSystem *sys);  /* spin count, or < 0 */
/* 1 = internal Hamiltonian commutes with all collective z rotations,
 * 0 = it does not, negative = error. */
int32_t sbb_system_z_commutes(const SbbSystem *sys);

/* Dense propagator cache for a segment duration in seconds. */
SbbCache *sbb_cache_new(const SbbSystem *sys, double dt_s);
void sbb_cache_free(SbbCache *cache);

/* Pulse sequences in the optimizer's text table format. */
SbbSequence *sbb_sequence_parse(const char *text);
void sbb_sequence_free(SbbSequence *seq);
int64_t sbb_sequence_len(const SbbSequence *seq); /* segments, or < 0 */
/* Serialize against the system's channel labels/amplitudes; NULL on error. */
char *sbb_sequence_format(const SbbSequence *seq, const SbbSystem *sys);

/* Singlet overlap Q of the config's thermal state propagated through seq. */
int32_t sbb_evaluate_fitness(const SbbCache *cache, const SbbSystem *sys,
                             const SbbSequence *seq, double *q_out);

/* Genetic optimization with an explicit master seed; q_out may be NULL. */
SbbSequence *sbb_optimize(const SbbConfig *cfg, uint64_t seed, double *q_out);

/* Least-squares monoexponential fit of n (time, value) samples. */
int32_t sbb_fit_monoexponential(const double *times, const double *values,
                                size_t n, int32_t model,
                                double *amplitude_out,
                                double *time_constant_out,
                                double *residual_rms_out);

/* eps0 * exp(-tau / t_singlet); NaN on invalid arguments. */
double sbb_spinlock_decay(double eps0, double tau_s, double t_singlet_s);

/* enhancement * sqrt(recycle_ratio); NaN on invalid arguments. */
double sbb_sensitivity_gain(double enhancement, double recycle_ratio);

#ifdef __cplusplus
}
#endif

#endif /* SINGLETBB_H */
