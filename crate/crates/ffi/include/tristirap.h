#ifndef TRISTIRAP_H
#define TRISTIRAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

// Number of values per trajectory sample; see [`ts_column_name`].
#define TS_SAMPLE_WIDTH 10

// Result code of every fallible call.
typedef enum TsStatus {
  TS_OK = 0,
  // A required pointer argument was NULL.
  TS_ERR_NULL = 1,
  // Bad argument value (index out of range, invalid UTF-8, unknown preset).
  TS_ERR_INVALID_ARG = 2,
  // The configuration text could not be read or parsed.
  TS_ERR_CONFIG = 3,
  // The configuration parsed but violates a constraint.
  TS_ERR_VALIDATION = 4,
  // The simulation itself failed (step-size underflow, invariant breach, timeout).
  TS_ERR_INTEGRATOR = 5,
  // A Rust panic was caught at the boundary.
  TS_ERR_PANIC = 6,
} TsStatus;

// Opaque scenario: a resolved configuration with one or more runs.
typedef struct TsScenario TsScenario;

// Opaque sampled trajectory.
typedef struct TsSeries TsSeries;

typedef struct TsFullTransfer {
  double f_after_stirap;
  double p_q_final;
  // Start of the C switch-off (us).
  double stirap_end;
  // 1 if every sample satisfied the density-matrix invariants.
  int invariants_hold;
} TsFullTransfer;

typedef struct TsReverseTransfer {
  double prep_fidelity_to_qs;
  double final_rho_dd;
  int invariants_hold;
} TsReverseTransfer;

typedef struct TsPartialStirap {
  double t_freeze;
  double min_fidelity;
  double final_fidelity;
  int invariants_hold;
} TsPartialStirap;

typedef struct TsOpticalPumping {
  double pump_time;
  double final_rho_dd;
} TsOpticalPumping;

// Dressed-state quantities of the weak S-Q coupling.
typedef struct TsDressedFrame {
  double alpha_c;
  double alpha;
  double beta;
  double lambda_q;
  double lambda_s;
} TsDressedFrame;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failing call on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *ts_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *ts_version(void);

// Number of built-in presets.
uintptr_t ts_preset_count(void);

// Name of preset `index` as a static string, or NULL if out of range.
const char *ts_preset_name(uintptr_t index);

// Builds a scenario from a built-in preset such as `"fig3"`.
//
// # Safety
// `name` must be a NUL-terminated string and `out` a valid pointer.
enum TsStatus ts_scenario_from_preset(const char *name, struct TsScenario **out);

// Builds a scenario from configuration text in the CLI's TOML format.
//
// # Safety
// `toml` must be a NUL-terminated string and `out` a valid pointer.
enum TsStatus ts_scenario_from_toml(const char *toml, struct TsScenario **out);

// Sets a numeric config key on every run, e.g. `"pulses.tau_us"` or
// `"lasers.B.rabi_over_2pi_MHz"`, and re-validates. On failure the scenario
// is unchanged.
//
// # Safety
// `scenario` must come from a `ts_scenario_from_*` call; `path` must be NUL-terminated.
enum TsStatus ts_scenario_set(struct TsScenario *scenario, const char *path, double value);

// Number of runs (series) in the scenario; 0 for NULL.
//
// # Safety
// `scenario` must be NULL or a live handle.
uintptr_t ts_scenario_run_count(const struct TsScenario *scenario);

// Writes the resolved configuration of the scenario as TOML into `buf`
// (NUL-terminated, truncated to `cap`). `needed` receives the full length
// including the terminator.
//
// # Safety
// `buf` must point to `cap` writable bytes or be NULL with `cap == 0`.
enum TsStatus ts_scenario_to_toml(const struct TsScenario *scenario,
                                  char *buf,
                                  uintptr_t cap,
                                  uintptr_t *needed);

// # Safety
// `scenario` must be NULL or a handle not yet freed.
void ts_scenario_free(struct TsScenario *scenario);

// D-to-Q transfer with C switch-off for run `run` of the scenario.
// `series` may be NULL; otherwise it receives a new trajectory handle.
//
// # Safety
// Pointers must be valid or NULL as documented.
enum TsStatus ts_run_full_transfer(const struct TsScenario *scenario,
                                   uintptr_t run,
                                   struct TsFullTransfer *result,
                                   struct TsSeries **series);

// C switch-on from `|Q>` followed by the Q-to-D transfer. Either trajectory
// pointer may be NULL.
//
// # Safety
// Pointers must be valid or NULL as documented.
enum TsStatus ts_run_reverse_transfer(const struct TsScenario *scenario,
                                      uintptr_t run,
                                      struct TsReverseTransfer *result,
                                      struct TsSeries **prep,
                                      struct TsSeries **transfer);

// Partial STIRAP with B and R held from `t_freeze` (us) on. Pass NaN to use
// the scenario's value or the default.
//
// # Safety
// Pointers must be valid or NULL as documented.
enum TsStatus ts_run_partial_stirap(const struct TsScenario *scenario,
                                    uintptr_t run,
                                    double t_freeze,
                                    struct TsPartialStirap *result,
                                    struct TsSeries **series);

// B-only optical pumping from `|S>` into `|D>`.
//
// # Safety
// Pointers must be valid as documented.
enum TsStatus ts_run_optical_pumping(const struct TsScenario *scenario,
                                     uintptr_t run,
                                     struct TsOpticalPumping *result);

// Number of samples; 0 for NULL.
//
// # Safety
// `series` must be NULL or a live handle.
uintptr_t ts_series_len(const struct TsSeries *series);

// Column name for `column < TS_SAMPLE_WIDTH` as a static string, else NULL.
const char *ts_column_name(uintptr_t column);

// Copies sample `index` into `out[TS_SAMPLE_WIDTH]` in column order.
//
// # Safety
// `out` must point to `TS_SAMPLE_WIDTH` writable doubles.
enum TsStatus ts_series_sample(const struct TsSeries *series, uintptr_t index, double *out);

// Copies up to `cap` values of one column into `buf`; `written` receives the
// number copied.
//
// # Safety
// `buf` must point to `cap` writable doubles.
enum TsStatus ts_series_column(const struct TsSeries *series,
                               uintptr_t column,
                               double *buf,
                               uintptr_t cap,
                               uintptr_t *written);

// # Safety
// `series` must be NULL or a handle not yet freed.
void ts_series_free(struct TsSeries *series);

// `Delta_R` (rad/us) on the three-photon resonance; `exact` selects the exact
// dressed frame instead of the first-order one.
//
// # Safety
// `out` must be a valid pointer.
enum TsStatus ts_resonance_detuning(double delta_b,
                                    double delta_c,
                                    double omega_c,
                                    int exact,
                                    double *out);

// Dressed frame of the S-Q coupling for `Omega_C`, `Delta_C` (rad/us).
//
// # Safety
// `out` must be a valid pointer.
enum TsStatus ts_dressed_frame(double omega_c,
                               double delta_c,
                               int exact,
                               struct TsDressedFrame *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TRISTIRAP_H */
