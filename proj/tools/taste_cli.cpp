// SPDX-License-Identifier: Apache-2.0
//
// Command-line front end over the C API. Exit codes: 0 success, 2 config
// error, 3 data error, 4 numerical abort.

#include "taste/taste_c.h"

#include <CLI11.hpp>

#include <cstdio>
#include <string>

namespace {

int finish(taste_rc rc) {
    if (rc == TASTE_OK) return 0;
    std::fprintf(stderr, "error: %s\n", taste_last_error());
    switch (rc) {
        case TASTE_ERR_CONFIG:
        case TASTE_ERR_ARGUMENT:
            return 2;
        case TASTE_ERR_DATA:
            return 3;
        case TASTE_ERR_NUMERIC:
            return 4;
        default:
            return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"taste: text-aligned speech tokenization toolkit"};
    app.require_subcommand(1);

    std::string config, out, variant, mode;
    long long seed = -1;

    auto add_common = [&](CLI::App* cmd, bool with_variant, bool with_mode) {
        cmd->add_option("--config", config, "configuration file")->required();
        cmd->add_option("--seed", seed, "seed override");
        cmd->add_option("--out", out, "output path override");
        if (with_variant)
            cmd->add_option("--variant", variant,
                            "enc-only | enc+agg | enc+agg+quan | enc-last | text-only");
        if (with_mode) cmd->add_option("--mode", mode, "token | embed");
    };

    CLI::App* gen = app.add_subcommand("gen-corpus", "generate the synthetic paired corpus");
    add_common(gen, false, false);
    CLI::App* traintok =
        app.add_subcommand("train-tokenizer", "train the text-aligned speech tokenizer");
    add_common(traintok, true, false);
    CLI::App* trainslm = app.add_subcommand("train-slm", "adapt the joint language model");
    add_common(trainslm, false, true);
    CLI::App* tokenize = app.add_subcommand("tokenize", "export token codes for the corpus");
    add_common(tokenize, false, false);
    CLI::App* reconstruct =
        app.add_subcommand("reconstruct", "teacher-forced unit reconstruction report");
    add_common(reconstruct, false, false);
    CLI::App* cont = app.add_subcommand("continue", "joint text-speech continuation");
    add_common(cont, false, true);
    CLI::App* edit = app.add_subcommand("edit", "swap word-aligned codes between utterances");
    add_common(edit, false, false);
    CLI::App* score = app.add_subcommand("score", "likelihood scores for corpus items");
    add_common(score, false, true);
    CLI::App* bitrate = app.add_subcommand("bitrate", "token frequency and bitrate accounting");
    add_common(bitrate, false, false);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? 0 : 2;
    }

    const char* cfg = config.c_str();
    const char* outp = out.empty() ? nullptr : out.c_str();
    const char* var = variant.empty() ? nullptr : variant.c_str();
    const char* md = mode.empty() ? nullptr : mode.c_str();

    if (gen->parsed()) return finish(taste_cmd_gen_corpus(cfg, seed, outp));
    if (traintok->parsed()) return finish(taste_cmd_train_tokenizer(cfg, seed, var, outp));
    if (trainslm->parsed()) return finish(taste_cmd_train_slm(cfg, seed, md, outp));
    if (tokenize->parsed()) return finish(taste_cmd_tokenize(cfg, seed, outp));
    if (reconstruct->parsed()) return finish(taste_cmd_reconstruct(cfg, seed, outp));
    if (cont->parsed()) return finish(taste_cmd_continue(cfg, seed, md, outp));
    if (edit->parsed()) return finish(taste_cmd_edit(cfg, seed, outp));
    if (score->parsed()) return finish(taste_cmd_score(cfg, seed, md, outp));
    if (bitrate->parsed()) {
        double freq = 0, speech = 0, joint = 0;
        taste_rc rc = taste_cmd_bitrate(cfg, seed, outp, &freq, &speech, &joint);
        if (rc == TASTE_OK)
            std::printf("frequency_hz=%.6f speech_bps=%.6f joint_bps=%.6f\n", freq, speech, joint);
        return finish(rc);
    }
    return 2;
}
