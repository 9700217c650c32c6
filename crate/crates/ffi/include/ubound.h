/* C ABI for the ubound partition-norm and bound evaluators. */

#ifndef UBOUND_H
#define UBOUND_H

/* Generated by cbindgen from the ubound-ffi crate; do not edit by hand. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Success.
#define UB_STATUS_OK 0

// A gated verification check failed (the run itself succeeded).
#define UB_STATUS_VERIFICATION_FAILED 1

// Malformed input: bad JSON, bad partition spec, domain errors.
#define UB_STATUS_INVALID_INPUT 2

// Kernel failed the degeneracy gate.
#define UB_STATUS_NOT_CANONICAL 3

// A required pointer argument was null.
#define UB_STATUS_NULL_POINTER 4

// Internal panic; the library state is still consistent.
#define UB_STATUS_PANIC 5

// Opaque kernel handle: a fully expanded ensemble.
typedef struct UbKernel UbKernel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Returns the last error message for this thread as a heap string, or null
// when no error has occurred. Release with `ub_string_free`.
char *ub_last_error_message(void);

// Releases a string returned by this library.
//
// # Safety
// `s` must be null or a pointer previously returned by this library and not
// yet freed.
void ub_string_free(char *s);

// Parses a kernel (shared or expanded JSON form) into a handle.
//
// # Safety
// `json` must be a valid NUL-terminated string; `out` must be a valid
// pointer to writable memory.
int32_t ub_kernel_parse(const char *json,
                        struct UbKernel **out);

// Releases a kernel handle.
//
// # Safety
// `kernel` must be null or a handle from `ub_kernel_parse` not yet freed.
void ub_kernel_free(struct UbKernel *kernel);

// Re-centers the kernel in place so every coordinate is degenerate.
//
// # Safety
// `kernel` must be a live handle from `ub_kernel_parse`.
int32_t ub_kernel_canonicalize(struct UbKernel *kernel);

// Serializes the kernel back to its expanded JSON form.
//
// # Safety
// `kernel` must be a live handle; `out` valid writable memory. The result
// must be released with `ub_string_free`.
int32_t ub_kernel_to_json(const struct UbKernel *kernel,
                          char **out);

// Moment bound at order `p`; writes a bound-report JSON.
// `options_json` is an options object or null for defaults.
//
// # Safety
// `kernel` must be a live handle; strings NUL-terminated; `out` writable.
int32_t ub_moment_bound(const struct UbKernel *kernel,
                        double p,
                        const char *options_json,
                        char **out);

// Tail bound at level `t`; writes a bound-report JSON.
//
// # Safety
// Same contract as `ub_moment_bound`.
int32_t ub_tail_bound(const struct UbKernel *kernel,
                      double t,
                      const char *options_json,
                      char **out);

// Replicated-coordinate tail bound from a shared kernel JSON (the handle
// path cannot be used: the bound needs the unexpanded form).
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t ub_iid_tail_bound(const char *shared_json,
                          size_t n,
                          double t,
                          const char *options_json,
                          char **out);

// Partition norm of an array JSON under a spec like "{1,3}|{2}".
// `method` is "auto", "exact2", "alternating", or "oracle" (null = auto);
// `config_json` is a norm-config object or null for defaults.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t ub_partition_norm(const char *array_json,
                          const char *partition,
                          const char *method,
                          const char *config_json,
                          char **out);

// Poisson threshold report at order `p` for a step kernel. A null
// `process_json` means a homogeneous unit-rate process.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t ub_theorem8_threshold(const char *step_kernel_json,
                              const char *process_json,
                              double p,
                              const char *options_json,
                              char **out);

// Poisson tail bound at level `t` for a step kernel.
//
// # Safety
// Same contract as `ub_theorem8_threshold`.
int32_t ub_theorem8_tail_bound(const char *step_kernel_json,
                               const char *process_json,
                               double t,
                               const char *options_json,
                               char **out);

// Runs a verification experiment config. `base_dir` resolves file
// references inside the config (null = current directory). Writes the
// report JSON and returns `UB_STATUS_VERIFICATION_FAILED` when a gated
// check fails; artifacts are not written to disk.
//
// # Safety
// Strings must be NUL-terminated; `out` writable.
int32_t ub_run_experiment(const char *config_json,
                          const char *base_dir,
                          char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* UBOUND_H */
