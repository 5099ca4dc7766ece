/* SPDX-License-Identifier: Apache-2.0 */
#ifndef TASTE_C_H
#define TASTE_C_H

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

/* Status codes. The CLI maps ARGUMENT onto CONFIG for its exit code. */
typedef enum taste_rc {
    TASTE_OK = 0,
    TASTE_ERR_CONFIG = 2,
    TASTE_ERR_DATA = 3,
    TASTE_ERR_NUMERIC = 4,
    TASTE_ERR_ARGUMENT = 5,
    TASTE_ERR_INTERNAL = 6
} taste_rc;

const char* taste_version(void);

/* Message for the most recent failure on this thread; empty string if none. */
const char* taste_last_error(void);

/*
 * Command surface. Every command reads the config file; seed >= 0, variant,
 * mode and out override the corresponding config values when non-null.
 */
taste_rc taste_cmd_gen_corpus(const char* config_path, long long seed, const char* out_dir);
taste_rc taste_cmd_train_tokenizer(const char* config_path, long long seed, const char* variant,
                                   const char* out_path);
taste_rc taste_cmd_train_slm(const char* config_path, long long seed, const char* mode,
                             const char* out_path);
taste_rc taste_cmd_tokenize(const char* config_path, long long seed, const char* out_path);
taste_rc taste_cmd_reconstruct(const char* config_path, long long seed, const char* out_path);
taste_rc taste_cmd_continue(const char* config_path, long long seed, const char* mode,
                            const char* out_path);
taste_rc taste_cmd_edit(const char* config_path, long long seed, const char* out_path);
taste_rc taste_cmd_score(const char* config_path, long long seed, const char* mode,
                         const char* out_path);
taste_rc taste_cmd_bitrate(const char* config_path, long long seed, const char* out_path,
                           double* frequency_hz, double* speech_bps, double* joint_bps);

/* Opaque tokenizer handle over a trained checkpoint. */
typedef struct taste_tokenizer_s taste_tokenizer_t;

taste_tokenizer_t* taste_tokenizer_open(const char* checkpoint_path);
void taste_tokenizer_close(taste_tokenizer_t* t);
int taste_tokenizer_rvq_layers(const taste_tokenizer_t* t);
int taste_tokenizer_codebook_size(const taste_tokenizer_t* t);
int taste_tokenizer_embed_dim(const taste_tokenizer_t* t);

/* Quantize n embedding rows (row-major n x dim) into codes (R x n row-major). */
taste_rc taste_tokenizer_quantize(const taste_tokenizer_t* t, const double* z, int n, int dim,
                                  int* codes_out);

/* Reconstruct embeddings from codes (R x n row-major) into out (n x dim). */
taste_rc taste_tokenizer_dequantize(const taste_tokenizer_t* t, const int* codes, int n,
                                    double* out);

/* Opaque manifest handle. */
typedef struct taste_manifest_s taste_manifest_t;

taste_manifest_t* taste_manifest_open(const char* manifest_path);
void taste_manifest_close(taste_manifest_t* m);
int taste_manifest_count(const taste_manifest_t* m);
const char* taste_manifest_utterance_id(const taste_manifest_t* m, int index);
double taste_manifest_duration_s(const taste_manifest_t* m, int index);
int taste_manifest_speaker(const taste_manifest_t* m, int index);
int taste_manifest_word_count(const taste_manifest_t* m, int index);

#ifdef __cplusplus
}
#endif

#endif /* TASTE_C_H */
