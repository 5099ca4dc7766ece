// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "taste/taste_c.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

namespace fs = std::filesystem;

std::string g_root;

std::string write_config() {
    fs::path root = fs::temp_directory_path() / "taste_capi_tests";
    fs::remove_all(root);
    fs::create_directories(root);
    g_root = root.string();

    std::ostringstream cfg;
    cfg << "version = 1\n"
        << "[run]\n"
        << "seed = 9\n"
        << "corpus_dir = " << g_root << "/corpus\n"
        << "tokenizer_ckpt = " << g_root << "/tok.ckpt\n"
        << "slm_ckpt = " << g_root << "/slm.ckpt\n"
        << "codes = " << g_root << "/codes.txt\n"
        << "[corpus]\n"
        << "num_utterances = 40\n"
        << "d_in = 8\n"
        << "unit_vocab = 16\n"
        << "max_words = 5\n"
        << "[tokenizer]\n"
        << "d_h = 16\n"
        << "encoder_heads = 2\n"
        << "agg_layers = 1\n"
        << "agg_heads = 2\n"
        << "d_z = 8\n"
        << "rvq_layers = 2\n"
        << "codebook_size = 8\n"
        << "[decoder]\n"
        << "width = 16\n"
        << "layers = 2\n"
        << "heads = 2\n"
        << "d_spk = 4\n"
        << "[train]\n"
        << "warmup_epochs = 1\n"
        << "[optim]\n"
        << "tokenizer_epochs = 2\n"
        << "encoder_pretrain_epochs = 1\n"
        << "text_pretrain_epochs = 1\n"
        << "joint_epochs = 1\n"
        << "batch_size = 8\n"
        << "[slm]\n"
        << "width = 24\n"
        << "layers = 2\n"
        << "heads = 2\n"
        << "lora_rank = 4\n"
        << "lora_alpha = 8\n"
        << "[decode]\n"
        << "max_steps = 6\n"
        << "[edit]\n"
        << "utt_a = utt000000\n"
        << "utt_b = utt000001\n"
        << "words = 1\n"
        << "[continue]\n"
        << "count = 2\n";
    std::string path = (root / "run.ini").string();
    std::ofstream(path) << cfg.str();
    return path;
}

const std::string g_config = write_config();

bool file_exists(const std::string& p) { return fs::exists(p); }

} // namespace

TEST_CASE("c api: full command pipeline") {
    REQUIRE(std::string(taste_version()) == "0.1.0");

    // corpus
    REQUIRE(taste_cmd_gen_corpus(g_config.c_str(), -1, nullptr) == TASTE_OK);
    REQUIRE(file_exists(g_root + "/corpus/manifest.txt"));

    taste_manifest_t* manifest = taste_manifest_open((g_root + "/corpus/manifest.txt").c_str());
    REQUIRE(manifest != nullptr);
    CHECK(taste_manifest_count(manifest) == 40);
    CHECK(std::string(taste_manifest_utterance_id(manifest, 0)) == "utt000000");
    CHECK(taste_manifest_duration_s(manifest, 0) > 0.0);
    CHECK(taste_manifest_speaker(manifest, 0) >= 0);
    CHECK(taste_manifest_word_count(manifest, 0) >= 3);
    CHECK(taste_manifest_utterance_id(manifest, 99) == nullptr);
    taste_manifest_close(manifest);

    // tokenizer training
    REQUIRE(taste_cmd_train_tokenizer(g_config.c_str(), -1, "enc+agg+quan", nullptr) == TASTE_OK);
    REQUIRE(file_exists(g_root + "/tok.ckpt"));
    REQUIRE(file_exists(g_root + "/tok.ckpt.metrics.jsonl"));

    taste_tokenizer_t* tok = taste_tokenizer_open((g_root + "/tok.ckpt").c_str());
    REQUIRE(tok != nullptr);
    CHECK(taste_tokenizer_rvq_layers(tok) == 2);
    CHECK(taste_tokenizer_codebook_size(tok) == 8);
    CHECK(taste_tokenizer_embed_dim(tok) == 8);

    SUBCASE("quantize / dequantize through the flat-array interface") {
        const int n = 3, dim = 8, layers = 2;
        std::vector<double> z(static_cast<size_t>(n * dim));
        for (size_t i = 0; i < z.size(); ++i) z[i] = 0.1 * static_cast<double>(i % 7) - 0.3;
        std::vector<int> codes(static_cast<size_t>(layers * n));
        REQUIRE(taste_tokenizer_quantize(tok, z.data(), n, dim, codes.data()) == TASTE_OK);
        for (int c : codes) {
            CHECK(c >= 0);
            CHECK(c < 8);
        }
        std::vector<double> recon(static_cast<size_t>(n * dim));
        REQUIRE(taste_tokenizer_dequantize(tok, codes.data(), n, recon.data()) == TASTE_OK);
        // re-quantizing the reconstruction must reproduce the codes
        std::vector<int> codes2(static_cast<size_t>(layers * n));
        REQUIRE(taste_tokenizer_quantize(tok, recon.data(), n, dim, codes2.data()) == TASTE_OK);
        CHECK(codes == codes2);

        CHECK(taste_tokenizer_quantize(tok, z.data(), n, 5, codes.data()) ==
              TASTE_ERR_ARGUMENT); // wrong width
        CHECK(std::string(taste_last_error()).find("dimension") != std::string::npos);
    }

    // exports and reports
    REQUIRE(taste_cmd_tokenize(g_config.c_str(), -1, (g_root + "/codes.txt").c_str()) == TASTE_OK);
    REQUIRE(file_exists(g_root + "/codes.txt"));
    REQUIRE(taste_cmd_reconstruct(g_config.c_str(), -1, (g_root + "/recon.txt").c_str()) ==
            TASTE_OK);
    {
        std::ifstream f(g_root + "/recon.txt");
        std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
        CHECK(text.find("# top1=") != std::string::npos);
        CHECK(text.find("top5=") != std::string::npos);
    }

    // slm
    REQUIRE(taste_cmd_train_slm(g_config.c_str(), -1, "token", nullptr) == TASTE_OK);
    REQUIRE(file_exists(g_root + "/slm.ckpt"));
    REQUIRE(taste_cmd_continue(g_config.c_str(), -1, "token",
                               (g_root + "/cont.txt").c_str()) == TASTE_OK);
    {
        std::ifstream f(g_root + "/cont.txt");
        std::string line;
        REQUIRE(static_cast<bool>(std::getline(f, line)));
        CHECK(line.find("text=") != std::string::npos);
        CHECK(line.find("codes=") != std::string::npos);
    }
    REQUIRE(taste_cmd_score(g_config.c_str(), -1, "token", (g_root + "/scores.txt").c_str()) ==
            TASTE_OK);
    {
        std::ifstream f(g_root + "/scores.txt");
        std::string id;
        double score;
        int rows = 0;
        while (f >> id >> score) {
            CHECK(std::isfinite(score));
            CHECK(score < 0.0);
            ++rows;
        }
        CHECK(rows == 40);
    }

    // editing
    REQUIRE(taste_cmd_edit(g_config.c_str(), -1, (g_root + "/edited.txt").c_str()) == TASTE_OK);
    REQUIRE(file_exists(g_root + "/edited.txt"));

    // bitrate
    double freq = 0, speech = 0, joint = 0;
    REQUIRE(taste_cmd_bitrate(g_config.c_str(), -1, (g_root + "/bitrate.txt").c_str(), &freq,
                              &speech, &joint) == TASTE_OK);
    CHECK(freq > 0.0);
    CHECK(speech == doctest::Approx(freq * 2 * std::log2(8.0)));
    CHECK(joint > speech);

    taste_tokenizer_close(tok);
}

TEST_CASE("c api: error taxonomy") {
    CHECK(taste_cmd_gen_corpus(nullptr, -1, nullptr) == TASTE_ERR_CONFIG);
    CHECK(taste_cmd_gen_corpus("/nonexistent/cfg.ini", -1, nullptr) == TASTE_ERR_CONFIG);
    CHECK(std::string(taste_last_error()).find("config") != std::string::npos);

    // valid config but missing corpus for a data-dependent command
    fs::path root = fs::temp_directory_path() / "taste_capi_err";
    fs::remove_all(root);
    fs::create_directories(root);
    std::string cfg = (root / "c.ini").string();
    std::ofstream(cfg) << "version = 1\n[run]\ncorpus_dir = " << root.string()
                       << "/nocorpus\ntokenizer_ckpt = " << root.string() << "/no.ckpt\n";
    CHECK(taste_cmd_tokenize(cfg.c_str(), -1, (root / "o.txt").string().c_str()) ==
          TASTE_ERR_DATA);
    CHECK(taste_tokenizer_open((root / "no.ckpt").string().c_str()) == nullptr);
    CHECK(taste_manifest_open((root / "no.txt").string().c_str()) == nullptr);
}
