#ifndef ETPOISSON_H
#define ETPOISSON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum EtpStatus {
  ETP_STATUS_OK = 0,
  ETP_STATUS_NULL_ARGUMENT = 1,
  ETP_STATUS_INVALID_ARGUMENT = 2,
  ETP_STATUS_INVALID_INSTANCE = 3,
  ETP_STATUS_INVALID_CONFIG = 4,
  /**
   * The iteration blew up; the configuration is unstable for the instance.
   */
  ETP_STATUS_DIVERGED = 5,
  /**
   * The requested value does not exist for this run, such as virtual
   * time on the threaded backend.
   */
  ETP_STATUS_NOT_APPLICABLE = 6,
  ETP_STATUS_BUFFER_TOO_SMALL = 7,
  ETP_STATUS_INTERNAL = 8,
} EtpStatus;

typedef enum EtpPolicy {
  ETP_POLICY_SYNC = 0,
  ETP_POLICY_ASYNC = 1,
  ETP_POLICY_EVENT = 2,
} EtpPolicy;

typedef enum EtpBackend {
  ETP_BACKEND_VIRTUAL = 0,
  ETP_BACKEND_THREADS = 1,
} EtpBackend;

typedef struct EtpConfig EtpConfig;

typedef struct EtpInstance EtpInstance;

typedef struct EtpReport EtpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failing call on this thread, or null if none.
 * Valid until the next failing call on the same thread.
 */
const char *etp_last_error_message(void);

/**
 * Library version as a static string.
 */
const char *etp_version(void);

/**
 * Periodic unit-density instance with a known discrete solution.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum EtpStatus etp_instance_manufactured(size_t nx, size_t ny, struct EtpInstance **out);

/**
 * Three bubbles at a 1000:1 density ratio with a seeded right-hand side.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum EtpStatus etp_instance_bubble(size_t nx,
                                   size_t ny,
                                   double dt,
                                   uint64_t seed,
                                   struct EtpInstance **out);

/**
 * Parses and validates an instance serialized as JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a
 * pointer write.
 */
enum EtpStatus etp_instance_from_json(const char *json, struct EtpInstance **out);

/**
 * Number of cells, or 0 for a null handle.
 *
 * # Safety
 * `inst` must be null or a live handle.
 */
size_t etp_instance_cells(const struct EtpInstance *inst);

/**
 * # Safety
 * `inst` must be null or a handle not yet freed.
 */
void etp_instance_free(struct EtpInstance *inst);

/**
 * Default configuration: 8 PEs, asynchronous, virtual backend.
 *
 * # Safety
 * `out` must be valid for a pointer write.
 */
enum EtpStatus etp_config_new(struct EtpConfig **out);

/**
 * Parses a full configuration serialized as JSON.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be valid for a
 * pointer write.
 */
enum EtpStatus etp_config_from_json(const char *json, struct EtpConfig **out);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_pes(struct EtpConfig *cfg, size_t n_pes);

/**
 * Selects a policy. `Event` uses default threshold parameters until
 * [`etp_config_set_event`] is called.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_policy(struct EtpConfig *cfg, enum EtpPolicy policy);

/**
 * Switches to the event-triggered policy with the given horizon, decay and
 * warm-up length.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_event(struct EtpConfig *cfg,
                                    double horizon,
                                    double decay,
                                    uint64_t warmup);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_backend(struct EtpConfig *cfg, enum EtpBackend backend);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_omega(struct EtpConfig *cfg, double omega);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_tol(struct EtpConfig *cfg, double tol);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_seed(struct EtpConfig *cfg, uint64_t seed);

/**
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_step_limit(struct EtpConfig *cfg, uint64_t limit);

/**
 * Uses randomized compute and latency delays instead of unit compute and
 * instant delivery.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_jitter(struct EtpConfig *cfg, bool jitter);

/**
 * Multiplies the compute delay of PE `pe` by `factor`.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_slow_pe(struct EtpConfig *cfg, size_t pe, uint64_t factor);

/**
 * Microseconds of sleep per unit of delay in the threaded backend.
 *
 * # Safety
 * `cfg` must be a live handle.
 */
enum EtpStatus etp_config_set_tick_us(struct EtpConfig *cfg, uint64_t tick_us);

/**
 * # Safety
 * `cfg` must be null or a handle not yet freed.
 */
void etp_config_free(struct EtpConfig *cfg);

/**
 * Solves `inst` under `cfg`. A run that hits the step limit still returns
 * `Ok` with a report whose `passed` flag is false.
 *
 * # Safety
 * `inst` and `cfg` must be live handles; `out` must be valid for a pointer
 * write.
 */
enum EtpStatus etp_run(const struct EtpInstance *inst,
                       const struct EtpConfig *cfg,
                       struct EtpReport **out);

/**
 * Terminated normally with the assembled relative residual below
 * tolerance. False for a null handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
bool etp_report_passed(const struct EtpReport *report);

/**
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum EtpStatus etp_report_final_residual(const struct EtpReport *report, double *out);

/**
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum EtpStatus etp_report_total_halo_messages(const struct EtpReport *report, uint64_t *out);

/**
 * Virtual completion time; `NotApplicable` on the threaded backend.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum EtpStatus etp_report_virtual_time(const struct EtpReport *report, uint64_t *out);

/**
 * Wall time in milliseconds; `NotApplicable` on the virtual backend.
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a write.
 */
enum EtpStatus etp_report_wall_time_ms(const struct EtpReport *report, double *out);

/**
 * Copies the solution, row-major, into `buf`. `len` is the capacity of
 * `buf` in values; the needed length is always written to `needed` when it
 * is non-null, and `BufferTooSmall` is returned if `len` falls short.
 *
 * # Safety
 * `report` must be a live handle; `buf` must be valid for `len` writes.
 */
enum EtpStatus etp_report_solution(const struct EtpReport *report,
                                   double *buf,
                                   size_t len,
                                   size_t *needed);

/**
 * Serializes the whole report as JSON. Free the string with
 * [`etp_string_free`].
 *
 * # Safety
 * `report` must be a live handle; `out` must be valid for a pointer write.
 */
enum EtpStatus etp_report_to_json(const struct EtpReport *report, char **out);

/**
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void etp_report_free(struct EtpReport *report);

/**
 * Frees a string returned by this library.
 *
 * # Safety
 * `s` must be null or a string from [`etp_report_to_json`] not yet freed.
 */
void etp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ETPOISSON_H */
