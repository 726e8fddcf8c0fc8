#ifndef FIBERCAVITY_H
#define FIBERCAVITY_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum FcStatus {
  FC_STATUS_OK = 0,
  FC_STATUS_NULL_POINTER = 1,
  FC_STATUS_INVALID_UTF8 = 2,
  FC_STATUS_CONFIG_INVALID = 3,
  FC_STATUS_ENERGY_CONSERVATION_VIOLATED = 4,
  FC_STATUS_NON_PHYSICAL_PARAMETER = 5,
  FC_STATUS_GRID_TOO_COARSE = 6,
  FC_STATUS_TRUNCATION_TOO_TIGHT = 7,
  FC_STATUS_DIVISION_BY_ZERO_RATE = 8,
  FC_STATUS_NO_CONVERGENCE = 9,
  FC_STATUS_CURVE_RANGE_EXCEEDED = 10,
  FC_STATUS_EMPTY_INPUT = 11,
  FC_STATUS_IO_ERROR = 12,
  FC_STATUS_RUNTIME_FAILURE = 13,
  FC_STATUS_PANIC = 14,
} FcStatus;

/**
 * Opaque validated configuration.
 */
typedef struct FcConfig FcConfig;

typedef struct FcReadoutPoint {
  double delay_cycles;
  double survival;
  double eta_conv;
  double total;
} FcReadoutPoint;

/**
 * Model observables at one readout delay. Undefined ratios are NaN.
 */
typedef struct FcObservables {
  double rate_h_cps;
  double rate_s_cps;
  double rate_r_cps;
  double rate_hr_cps;
  double rate_hr1r2_cps;
  double g2_xc_hs_raw;
  double g2_xc_hs_subtracted;
  double g2_xc_hr;
  double g2_ac_heralded;
  double g2_noise;
  double heralding_probability;
  double heralding_efficiency_subtracted;
  double klyshko_eta_h;
} FcObservables;

typedef struct FcMultiplexResult {
  double p_out;
  double enhancement;
} FcMultiplexResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *fc_version(void);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * excluding the terminator, or 0 when there is no error.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t fc_last_error_message(char *buf, size_t len);

/**
 * Built-in primary cavity parameters.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum FcStatus fc_config_primary(struct FcConfig **out);

/**
 * Built-in alternate (12-cycle) cavity parameters.
 *
 * # Safety
 * `out` must be a valid pointer to write the handle to.
 */
enum FcStatus fc_config_alternate(struct FcConfig **out);

/**
 * Parses and validates a JSON configuration document.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` a valid pointer.
 */
enum FcStatus fc_config_from_json(const char *json, struct FcConfig **out);

/**
 * Loads and validates a configuration file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` a valid pointer.
 */
enum FcStatus fc_config_load(const char *path, struct FcConfig **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `cfg` must come from an `fc_config_*` constructor and not be used again.
 */
void fc_config_free(struct FcConfig *cfg);

/**
 * Sets one dotted entry (e.g. `pulses.energy_p_nj`, value `5.0`) and
 * revalidates. On failure the handle is left unchanged.
 *
 * # Safety
 * `cfg` must be a live handle; `key` and `value` NUL-terminated strings.
 */
enum FcStatus fc_config_set(struct FcConfig *cfg, const char *key, const char *value);

/**
 * Serialized configuration. Free the result with [`fc_string_free`].
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum FcStatus fc_config_to_json(const struct FcConfig *cfg, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void fc_string_free(char *s);

/**
 * Walk-off parameter ζ and per-cycle ring-down survival.
 *
 * # Safety
 * `cfg` must be a live handle; outputs may be null to skip.
 */
enum FcStatus fc_config_derived(const struct FcConfig *cfg,
                                double *zeta,
                                double *survival,
                                double *lambda_r_nm);

/**
 * Conversion angle ξ(t) of the configured control pulses, in radians.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum FcStatus fc_xi(const struct FcConfig *cfg, double t_ps, double *out);

/**
 * Survival, conversion efficiency and total readout probability at delay ≥ 1.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum FcStatus fc_readout_probability(const struct FcConfig *cfg,
                                     uint32_t delay,
                                     struct FcReadoutPoint *out);

/**
 * Analytic rates and correlations at a readout delay.
 *
 * # Safety
 * `cfg` must be a live handle; `out` a valid pointer.
 */
enum FcStatus fc_predict(const struct FcConfig *cfg, uint32_t delay, struct FcObservables *out);

/**
 * Simulates a readout run (`controls_only` = 0) or a controls-only run and
 * writes the records to `path` (binary for a `.bin` path, CSV otherwise)
 * with its manifest sidecar.
 *
 * # Safety
 * `cfg` must be a live handle; `path` a NUL-terminated string.
 */
enum FcStatus fc_simulate_to_file(const struct FcConfig *cfg,
                                  uint64_t seed,
                                  uint64_t n_triggers,
                                  uint16_t delay,
                                  int32_t controls_only,
                                  const char *path);

/**
 * First-success multiplexing over `k` bins with readout efficiencies
 * `curve[T-1]` for T = 1..=`curve_len`.
 *
 * # Safety
 * `curve` must point to `curve_len` doubles; `out` a valid pointer.
 */
enum FcStatus fc_multiplex(double p_herald,
                           const double *curve,
                           size_t curve_len,
                           uint32_t k,
                           uint32_t bin_spacing,
                           uint32_t switch_latency,
                           struct FcMultiplexResult *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FIBERCAVITY_H */
