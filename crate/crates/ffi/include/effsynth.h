#ifndef EFFSYNTH_H
#define EFFSYNTH_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum EffsynthStatus {
  EFFSYNTH_STATUS_OK = 0,
  EFFSYNTH_STATUS_NULL_ARGUMENT = 1,
  EFFSYNTH_STATUS_INVALID_UTF8 = 2,
  EFFSYNTH_STATUS_PARSE = 3,
  EFFSYNTH_STATUS_VALIDATION = 4,
  EFFSYNTH_STATUS_INVALID_PARAMETER = 5,
  EFFSYNTH_STATUS_UNSATISFIABLE = 6,
  EFFSYNTH_STATUS_SOLVER = 7,
  EFFSYNTH_STATUS_PANIC = 8,
} EffsynthStatus;

typedef enum EffsynthMethod {
  EFFSYNTH_METHOD_ESTIMATED = 0,
  EFFSYNTH_METHOD_EXACT = 1,
} EffsynthMethod;

// A product of a model and an automaton with its reward and cost.
typedef struct EffsynthProblem EffsynthProblem;

// Result of a synthesis run.
typedef struct EffsynthReport EffsynthReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *effsynth_version(void);

// Message of the last failed call on this thread; empty after a success.
// Valid until the next library call on the same thread.
const char *effsynth_last_error_message(void);

// Builds a problem from model text, automaton text and an optional
// utility table (null to use the model's inline blocks).
//
// # Safety
// String arguments must be null or valid NUL-terminated strings; `out` must
// be a valid pointer.
enum EffsynthStatus effsynth_problem_from_text(const char *model,
                                               const char *dra,
                                               const char *table,
                                               struct EffsynthProblem **out);

// Number of product states.
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum EffsynthStatus effsynth_problem_state_count(const struct EffsynthProblem *p, uintptr_t *out);

// # Safety
// `p` must be null or a handle from [`effsynth_problem_from_text`] not yet freed.
void effsynth_problem_free(struct EffsynthProblem *p);

// Synthesizes an `epsilon`-optimal policy with default tolerances.
//
// # Safety
// `p` must be a live problem handle and `out` a valid pointer.
enum EffsynthStatus effsynth_synthesize(const struct EffsynthProblem *p,
                                        double epsilon,
                                        enum EffsynthMethod method,
                                        struct EffsynthReport **out);

// Optimal efficiency over accepting policies.
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_value(const struct EffsynthReport *r, double *out);

// Efficiency of the synthesized policy.
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_efficiency(const struct EffsynthReport *r, double *out);

// Perturbation degree applied, or NaN if no perturbation was needed.
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_delta(const struct EffsynthReport *r, double *out);

// Whether every reachable recurrent class accepts.
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_accepted(const struct EffsynthReport *r, bool *out);

// The full report as JSON. Free the string with [`effsynth_string_free`].
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_json(const struct EffsynthReport *r, char **out);

// Canonical policy text over product states. Free with [`effsynth_string_free`].
//
// # Safety
// `r` must be a live report handle and `out` a valid pointer.
enum EffsynthStatus effsynth_report_policy_text(const struct EffsynthReport *r, char **out);

// # Safety
// `r` must be null or a handle from [`effsynth_synthesize`] not yet freed.
void effsynth_report_free(struct EffsynthReport *r);

// # Safety
// `s` must be null or a string returned by this library, not yet freed.
void effsynth_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EFFSYNTH_H */
