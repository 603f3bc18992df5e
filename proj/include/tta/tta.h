/* Public C interface for the test-time adaptation engine.
 *
 * All functions return a tta_status; on failure a thread-local message is
 * available through tta_last_error(). Strings returned through out
 * parameters are heap-allocated and must be released with tta_string_free().
 */
#ifndef TTA_TTA_H
#define TTA_TTA_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef int tta_status;
#define TTA_OK 0
#define TTA_ERR_INVALID 1 /* bad arguments, malformed config, unknown keys */
#define TTA_ERR_RUNTIME 2 /* I/O failures and other runtime errors */

/* Message describing the most recent failure on this thread. */
const char* tta_last_error(void);

void tta_string_free(char* text);

/* ---- class diversity ------------------------------------------------- */

/* Expected number of distinct categories in a batch of n samples from k
 * equally likely categories (uniform-composition counting model). */
tta_status tta_expected_diversity(uint32_t k, uint64_t n, double* out);

/* Monte Carlo estimate of the same quantity; deterministic per seed. */
tta_status tta_diversity_mc(uint32_t k, uint64_t n, uint64_t trials,
                            uint64_t seed, double* mean, double* std_error);

/* ---- adaptive momentum ------------------------------------------------ */

/* Batches whose EMA weight stays above the epsilon cutoff. */
tta_status tta_effective_batch_count(double m, double epsilon, uint64_t* out);

tta_status tta_effective_pool(double m, uint64_t n_t, double epsilon,
                              uint64_t* out);

/* Grid search for the momentum minimizing the diversity-alignment
 * objective. `objectives` (may be NULL) receives one value per grid entry. */
tta_status tta_select_momentum(uint64_t n_s, uint64_t n_t, uint32_t k,
                               const double* grid, size_t grid_len,
                               double epsilon, double lambda, double* m_star,
                               uint64_t* pool_size, double* objectives);

/* ---- engine handle ----------------------------------------------------- */

/* Opaque per-stream adaptation state. One handle per stream; calls on a
 * single handle must be serialized by the caller. */
typedef struct tta_engine_s tta_engine;

/* Creates an engine from a JSON description:
 * {
 *   "mode": "source_only" | "tbn" | "tema_only" | "fixed_alpha" | "full",
 *   "momentum": 0.01,          // tema_only / full
 *   "fixed_alpha": 0.5,        // fixed_alpha mode
 *   "gamma": 0.5, "tau": 0.1,
 *   "layers": [ { "mean": [...], "variance": [...], "scale": [...],
 *                 "shift": [...], "transform": [[...], ...] }, ... ]
 * }
 */
tta_status tta_engine_create(const char* json_config, tta_engine** out);

void tta_engine_destroy(tta_engine* engine);

tta_status tta_engine_layer_count(const tta_engine* engine, uint64_t* out);
tta_status tta_engine_input_width(const tta_engine* engine, uint64_t* out);
tta_status tta_engine_output_width(const tta_engine* engine, uint64_t* out);

/* Processes one batch of n samples (column-major input width x n).
 * `alphas` (layer count) and `output` (output width x n, column-major) are
 * optional and filled when non-NULL. */
tta_status tta_engine_process_batch(tta_engine* engine, const double* features,
                                    uint64_t n, double* alphas, double* output);

/* JSON snapshot of the mutable stream state; restoring it into an engine
 * created from the same config resumes the stream bit-exactly. */
tta_status tta_engine_snapshot(const tta_engine* engine, char** json_out);
tta_status tta_engine_restore(tta_engine* engine, const char* snapshot_json);

/* ---- experiment runner -------------------------------------------------- */

/* Runs the simulation described by a TOML config file, writing metrics CSVs
 * and a manifest. Empty/NULL overrides fall back to the config values;
 * pass a negative seed_override to keep the config seed. */
tta_status tta_simulate(const char* config_path, const char* out_dir_override,
                        int64_t seed_override);

/* Aggregates a completed run directory into a text table. */
tta_status tta_report(const char* run_dir, char** table_out);

/* Default simulation config (TOML), for --print-defaults style output. */
tta_status tta_default_config(char** text_out);

#ifdef __cplusplus
} /* extern "C" */
#endif

#endif /* TTA_TTA_H */
