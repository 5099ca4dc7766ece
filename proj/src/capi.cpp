// SPDX-License-Identifier: Apache-2.0
#include "taste/taste_c.h"

#include "taste/model.hpp"
#include "taste/pipeline.hpp"
#include "taste/tokenizer.hpp"

#include <cstring>
#include <string>

namespace {

thread_local std::string g_last_error;

taste_rc set_error(taste_rc rc, const std::string& msg) {
    g_last_error = msg;
    return rc;
}

template <typename Fn>
taste_rc guarded(Fn&& fn) {
    try {
        fn();
        g_last_error.clear();
        return TASTE_OK;
    } catch (const taste::ConfigError& e) {
        return set_error(TASTE_ERR_CONFIG, e.what());
    } catch (const taste::DataError& e) {
        return set_error(TASTE_ERR_DATA, e.what());
    } catch (const taste::NumericError& e) {
        return set_error(TASTE_ERR_NUMERIC, e.what());
    } catch (const taste::ArgError& e) {
        return set_error(TASTE_ERR_ARGUMENT, e.what());
    } catch (const std::exception& e) {
        return set_error(TASTE_ERR_INTERNAL, e.what());
    }
}

taste::RunConfig load_run_config(const char* config_path, long long seed, const char* variant,
                                 const char* mode, const char* out) {
    if (config_path == nullptr) throw taste::ConfigError("config path is required");
    taste::RunConfig rc = taste::RunConfig::from_file(config_path);
    if (seed >= 0) rc.seed = static_cast<uint64_t>(seed);
    if (variant != nullptr && variant[0] != '\0') {
        rc.variant = variant;
        rc.validate_variant();
    }
    if (mode != nullptr && mode[0] != '\0') {
        rc.mode = mode;
        taste::require_config(rc.mode == "token" || rc.mode == "embed",
                              "mode must be token or embed");
    }
    if (out != nullptr && out[0] != '\0') rc.out_path = out;
    return rc;
}

} // namespace

extern "C" {

const char* taste_version(void) { return "0.1.0"; }

const char* taste_last_error(void) { return g_last_error.c_str(); }

taste_rc taste_cmd_gen_corpus(const char* config_path, long long seed, const char* out_dir) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, nullptr, nullptr);
        taste::pipeline::cmd_gen_corpus(rc, out_dir != nullptr ? out_dir : "");
    });
}

taste_rc taste_cmd_train_tokenizer(const char* config_path, long long seed, const char* variant,
                                   const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, variant, nullptr, out_path);
        taste::pipeline::cmd_train_tokenizer(rc);
    });
}

taste_rc taste_cmd_train_slm(const char* config_path, long long seed, const char* mode,
                             const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, mode, out_path);
        taste::pipeline::cmd_train_slm(rc);
    });
}

taste_rc taste_cmd_tokenize(const char* config_path, long long seed, const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, nullptr, out_path);
        taste::pipeline::cmd_tokenize(rc);
    });
}

taste_rc taste_cmd_reconstruct(const char* config_path, long long seed, const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, nullptr, out_path);
        taste::pipeline::cmd_reconstruct(rc);
    });
}

taste_rc taste_cmd_continue(const char* config_path, long long seed, const char* mode,
                            const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, mode, out_path);
        taste::pipeline::cmd_continue(rc);
    });
}

taste_rc taste_cmd_edit(const char* config_path, long long seed, const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, nullptr, out_path);
        taste::pipeline::cmd_edit(rc);
    });
}

taste_rc taste_cmd_score(const char* config_path, long long seed, const char* mode,
                         const char* out_path) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, mode, out_path);
        taste::pipeline::cmd_score(rc);
    });
}

taste_rc taste_cmd_bitrate(const char* config_path, long long seed, const char* out_path,
                           double* frequency_hz, double* speech_bps, double* joint_bps) {
    return guarded([&] {
        taste::RunConfig rc = load_run_config(config_path, seed, nullptr, nullptr, out_path);
        taste::pipeline::BitrateReport rep = taste::pipeline::cmd_bitrate(rc);
        if (frequency_hz != nullptr) *frequency_hz = rep.frequency_hz;
        if (speech_bps != nullptr) *speech_bps = rep.speech_bps;
        if (joint_bps != nullptr) *joint_bps = rep.joint_bps;
    });
}

// ---------------------------------------------------------------------------

struct taste_tokenizer_s {
    taste::TasteModel model;
};

taste_tokenizer_t* taste_tokenizer_open(const char* checkpoint_path) {
    taste_tokenizer_t* handle = nullptr;
    taste_rc rc = guarded([&] {
        if (checkpoint_path == nullptr) throw taste::ArgError("checkpoint path is required");
        handle = new taste_tokenizer_s{taste::load_taste_model(checkpoint_path)};
    });
    return rc == TASTE_OK ? handle : nullptr;
}

void taste_tokenizer_close(taste_tokenizer_t* t) { delete t; }

int taste_tokenizer_rvq_layers(const taste_tokenizer_t* t) {
    return t != nullptr ? t->model.quant.layers() : 0;
}

int taste_tokenizer_codebook_size(const taste_tokenizer_t* t) {
    return t != nullptr ? t->model.quant.codebook_size() : 0;
}

int taste_tokenizer_embed_dim(const taste_tokenizer_t* t) {
    return t != nullptr ? t->model.tok_cfg.d_z : 0;
}

taste_rc taste_tokenizer_quantize(const taste_tokenizer_t* t, const double* z, int n, int dim,
                                  int* codes_out) {
    return guarded([&] {
        if (t == nullptr || z == nullptr || codes_out == nullptr)
            throw taste::ArgError("null argument");
        if (dim != t->model.tok_cfg.d_z) throw taste::ArgError("embedding dimension mismatch");
        taste::Mat zm(n, dim);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < dim; ++j) zm(i, j) = z[static_cast<size_t>(i) * dim + j];
        taste::tok::QuantizeResult qr = taste::tok::quantize(zm, t->model.quant);
        for (int r = 0; r < qr.codes.rows(); ++r)
            for (int c = 0; c < qr.codes.cols(); ++c)
                codes_out[static_cast<size_t>(r) * n + c] = qr.codes(r, c);
    });
}

taste_rc taste_tokenizer_dequantize(const taste_tokenizer_t* t, const int* codes, int n,
                                    double* out) {
    return guarded([&] {
        if (t == nullptr || codes == nullptr || out == nullptr)
            throw taste::ArgError("null argument");
        const int layers = t->model.quant.layers();
        taste::IMat cm(layers, n);
        for (int r = 0; r < layers; ++r)
            for (int c = 0; c < n; ++c) cm(r, c) = codes[static_cast<size_t>(r) * n + c];
        taste::Mat emb = taste::tok::dequantize(cm, t->model.quant);
        for (int i = 0; i < emb.rows(); ++i)
            for (int j = 0; j < emb.cols(); ++j)
                out[static_cast<size_t>(i) * emb.cols() + j] = emb(i, j);
    });
}

// ---------------------------------------------------------------------------

struct taste_manifest_s {
    taste::corpus::CorpusManifest manifest;
};

taste_manifest_t* taste_manifest_open(const char* manifest_path) {
    taste_manifest_t* handle = nullptr;
    taste_rc rc = guarded([&] {
        if (manifest_path == nullptr) throw taste::ArgError("manifest path is required");
        handle = new taste_manifest_s{taste::corpus::read_manifest(manifest_path)};
    });
    return rc == TASTE_OK ? handle : nullptr;
}

void taste_manifest_close(taste_manifest_t* m) { delete m; }

int taste_manifest_count(const taste_manifest_t* m) {
    return m != nullptr ? static_cast<int>(m->manifest.records.size()) : 0;
}

namespace {
const taste::corpus::ManifestRecord* record_at(const taste_manifest_t* m, int index) {
    if (m == nullptr || index < 0 || index >= static_cast<int>(m->manifest.records.size()))
        return nullptr;
    return &m->manifest.records[static_cast<size_t>(index)];
}
} // namespace

const char* taste_manifest_utterance_id(const taste_manifest_t* m, int index) {
    const auto* r = record_at(m, index);
    return r != nullptr ? r->utterance_id.c_str() : nullptr;
}

double taste_manifest_duration_s(const taste_manifest_t* m, int index) {
    const auto* r = record_at(m, index);
    return r != nullptr ? r->duration_s : -1.0;
}

int taste_manifest_speaker(const taste_manifest_t* m, int index) {
    const auto* r = record_at(m, index);
    return r != nullptr ? r->speaker_id : -1;
}

int taste_manifest_word_count(const taste_manifest_t* m, int index) {
    const auto* r = record_at(m, index);
    return r != nullptr ? static_cast<int>(r->transcription.words.size()) : -1;
}

} // extern "C"
