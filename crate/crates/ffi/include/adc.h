#ifndef ADC_H
#define ADC_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AdcMode {
  ADC_MODE_FORWARD = 0,
  ADC_MODE_REVERSE = 1,
} AdcMode;

/**
 * Result of every fallible call.
 */
typedef enum AdcStatus {
  ADC_STATUS_OK = 0,
  ADC_STATUS_PARSE_ERROR = 1,
  ADC_STATUS_SEMANTIC_ERROR = 2,
  ADC_STATUS_DIFF_ERROR = 3,
  ADC_STATUS_EVAL_ERROR = 4,
  ADC_STATUS_INVALID_ARGUMENT = 5,
  ADC_STATUS_INTERNAL = 6,
} AdcStatus;

/**
 * A parsed and checked module, plus its lowered form once something runs.
 */
typedef struct AdcModule AdcModule;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *adc_version(void);

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call into the library from the same thread.
 */
const char *adc_last_error(void);

/**
 * Parse and check `source`. Calls to `<f>_grad...` and `<f>_darg<i>`
 * functions that the source does not define are generated.
 *
 * # Safety
 * `source` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AdcStatus adc_module_parse(const char *source, struct AdcModule **out);

/**
 * Release a module. Null is ignored.
 *
 * # Safety
 * `m` must come from [`adc_module_parse`] and not be used afterwards.
 */
void adc_module_free(struct AdcModule *m);

/**
 * Number of functions in the module.
 *
 * # Safety
 * `m` must be a live handle or null.
 */
size_t adc_module_function_count(const struct AdcModule *m);

/**
 * Source text of the whole module; free with [`adc_string_free`].
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
enum AdcStatus adc_module_print(struct AdcModule *m, char **out);

/**
 * # Safety
 * `s` must come from this library, or be null.
 */
void adc_string_free(char *s);

/**
 * Generate a derivative of `function` and add it to the module. `wrt` is a
 * comma-separated list of parameter names; forward mode takes exactly one.
 * The generated function's name is stored in `out_name` (free with
 * [`adc_string_free`]) when `out_name` is not null.
 *
 * # Safety
 * Strings must be NUL-terminated; `m` must be a live handle.
 */
enum AdcStatus adc_module_differentiate(struct AdcModule *m,
                                        const char *function,
                                        enum AdcMode mode,
                                        const char *wrt,
                                        char **out_name);

/**
 * Evaluate a real-valued function. `ops`, when not null, receives the
 * arithmetic operation count.
 *
 * # Safety
 * `args` must point to `nargs` doubles, `out` to one.
 */
enum AdcStatus adc_eval(struct AdcModule *m,
                        const char *function,
                        const double *args,
                        size_t nargs,
                        double *out,
                        uint64_t *ops);

/**
 * Reverse-mode gradient with respect to every real parameter, in order.
 * `grad` must hold one double per real parameter. `ops`, when not null,
 * receives the gradient's operation count.
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum AdcStatus adc_gradient(struct AdcModule *m,
                            const char *function,
                            const double *args,
                            size_t nargs,
                            double *grad,
                            size_t ngrad,
                            uint64_t *ops);

/**
 * Hessian with respect to every real parameter, row-major into `out`
 * (`n * n` doubles, `n` the number of real parameters).
 *
 * # Safety
 * Pointers must be valid for the stated lengths.
 */
enum AdcStatus adc_hessian(struct AdcModule *m,
                           const char *function,
                           const double *args,
                           size_t nargs,
                           double *out,
                           size_t nout);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ADC_H */
