#ifndef NMFLOWGAN_H
#define NMFLOWGAN_H

/* C interface to the camera-noise modeling toolkit.
 *
 * Conventions:
 *  - Every function returns nmfg_status; NMFG_OK is 0. On failure the
 *    thread-local message from nmfg_last_error() describes what went wrong.
 *  - Images are row-major double buffers of 3*h*w values on the 0-255 scale,
 *    laid out as three full planes (R plane, then G, then B).
 *  - The pipeline functions mirror the CLI one to one: each writes its
 *    artifacts plus a run.meta capturing the resolved configuration into
 *    out_dir, and touches nothing outside out_dir.
 *  - Handles returned through an out-parameter are owned by the caller and
 *    released with the matching _free function. _free accepts NULL.
 */

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef enum nmfg_status {
    NMFG_OK = 0,
    NMFG_ERR_NOT_FOUND = 1,
    NMFG_ERR_PARSE = 2,
    NMFG_ERR_VALIDATION = 3,
    NMFG_ERR_FORMAT = 4,
    NMFG_ERR_INSUFFICIENT_DATA = 5,
    NMFG_ERR_FIT = 6,
    NMFG_ERR_UNKNOWN_CONDITION = 7,
    NMFG_ERR_CONFIG = 8,
    NMFG_ERR_NUMERICAL = 9,
    NMFG_ERR_DIVERGED = 10,
    NMFG_ERR_INTERNAL = 99
} nmfg_status;

/* Library version string, e.g. "0.1.0". Static storage, never freed. */
const char* nmfg_version(void);

/* Message of the most recent failing call on this thread; empty string after
 * a success. The pointer stays valid until the next call on the thread. */
const char* nmfg_last_error(void);

/* ------------------------------------------------------------------ */
/* Pipeline commands. config_path NULL means built-in defaults;        */
/* overrides is an optional array of "key=value" strings applied after */
/* the file, in order.                                                 */
/* ------------------------------------------------------------------ */

/* Noise statistics of the clean/noisy pairs in a manifest. Writes
 * hetero.csv, std_curve.csv and correlation.csv (offsets up to
 * max_distance) into out_dir. */
nmfg_status nmfg_analyze(const char* manifest_path, int max_distance, const char* out_dir);

/* Renders a synthetic dataset from a virtual-camera description. */
nmfg_status nmfg_oracle_generate(const char* config_path, const char* const* overrides,
                                 size_t n_overrides, uint64_t seed, const char* out_dir);

/* Trains the noise model on a manifest of clean/noisy pairs. Writes
 * checkpoints and logs into out_dir. resume_checkpoint NULL starts fresh;
 * otherwise training continues from that checkpoint's saved state. */
nmfg_status nmfg_train(const char* manifest_path, const char* config_path,
                       const char* const* overrides, size_t n_overrides,
                       const char* resume_checkpoint, const char* out_dir);

/* Synthesizes a noisy counterpart for every row of a clean manifest using
 * the row's own camera/ISO, and writes images + manifest.tsv to out_dir. */
nmfg_status nmfg_synthesize(const char* checkpoint_path, const char* clean_manifest_path,
                            uint64_t seed, const char* out_dir);

/* Same synthesis, but conditions come from a policy: "manifest" (each row's
 * own), "uniform" (drawn over the checkpoint's registry), or "fixed"
 * (fixed_camera/fixed_iso for every image; both ignored otherwise). */
nmfg_status nmfg_make_dataset(const char* checkpoint_path, const char* clean_manifest_path,
                              const char* policy, const char* fixed_camera, int fixed_iso,
                              uint64_t seed, const char* out_dir);

/* Trains the downstream denoiser on a manifest of clean/noisy pairs using
 * the denoiser_* and schedule keys of the training config. Writes
 * dn_best.bin and dn_val_log.tsv into out_dir. */
nmfg_status nmfg_train_denoiser(const char* manifest_path, const char* config_path,
                                const char* const* overrides, size_t n_overrides,
                                const char* out_dir);

/* Noise-distribution and/or denoiser evaluation, one run.meta for both.
 * real/synth manifests feed kl_report.csv; a denoiser checkpoint feeds
 * denoise_report.csv over test_manifest (defaults to real_manifest when
 * NULL). Pass NULL for a half to skip it; at least one half is required.
 * mean_psnr/mean_ssim receive the denoiser means when non-NULL. */
nmfg_status nmfg_evaluate(const char* real_manifest_path, const char* synth_manifest_path,
                          const char* denoiser_checkpoint_path, const char* test_manifest_path,
                          const char* out_dir, double* mean_psnr, double* mean_ssim);

/* ------------------------------------------------------------------ */
/* Model handles.                                                      */
/* ------------------------------------------------------------------ */

typedef struct nmfg_model nmfg_model;

/* Loads a noise-model checkpoint (flow stack, plus generator/critic when
 * the file carries them). */
nmfg_status nmfg_model_load(const char* checkpoint_path, nmfg_model** out);
void nmfg_model_free(nmfg_model* model);

/* 1 when the checkpoint carries the spatial-correlation generator. */
nmfg_status nmfg_model_has_gan(const nmfg_model* model, int* out);

/* Comma-separated camera names / ISO values the model was trained on.
 * Writes at most cap-1 characters plus a terminator; fails with
 * NMFG_ERR_VALIDATION when cap is too small. */
nmfg_status nmfg_model_cameras(const nmfg_model* model, char* buf, size_t cap);
nmfg_status nmfg_model_isos(const nmfg_model* model, char* buf, size_t cap);

/* Draws one noise field for a clean image under (camera, iso). noise_out
 * receives the continuous field, noisy_out the clipped 8-bit-rounded image;
 * either may be NULL. Identical (model, inputs, seed) give identical
 * output. */
nmfg_status nmfg_model_synthesize(const nmfg_model* model, const double* clean, int64_t h,
                                  int64_t w, const char* camera, int iso, uint64_t seed,
                                  double* noise_out, double* noisy_out);

/* Training objective of the pixel-wise model for one (clean, noise) pair:
 * per-sample negative log-likelihood, averaged over the image. */
nmfg_status nmfg_model_nll(const nmfg_model* model, const double* clean, const double* noise,
                           int64_t h, int64_t w, const char* camera, int iso, double* out);

typedef struct nmfg_denoiser nmfg_denoiser;

nmfg_status nmfg_denoiser_load(const char* checkpoint_path, nmfg_denoiser** out);
void nmfg_denoiser_free(nmfg_denoiser* denoiser);

/* Denoises one image; denoised_out (3*h*w) is clipped to [0,255]. */
nmfg_status nmfg_denoiser_run(const nmfg_denoiser* denoiser, const double* noisy, int64_t h,
                              int64_t w, double* denoised_out);

#ifdef __cplusplus
}
#endif

#endif /* NMFLOWGAN_H */
