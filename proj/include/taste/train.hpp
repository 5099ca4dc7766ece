// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "taste/config.hpp"
#include "taste/corpus.hpp"
#include "taste/metrics.hpp"
#include "taste/model.hpp"
#include "taste/slm.hpp"

#include <optional>
#include <string>
#include <vector>

namespace taste::train {

// Corpus loaded into memory plus the derived language (tokenizers, vocab
// sizes) rebuilt from the manifest seed and config.
struct Dataset {
    corpus::CorpusManifest manifest;
    corpus::CorpusLang lang;
    std::vector<Mat> features;
    std::vector<std::vector<int>> units;
    std::vector<int> train_idx;
    std::vector<int> holdout_idx;

    static Dataset load(const RunConfig& rc, const std::string& corpus_dir);
    int size() const { return static_cast<int>(manifest.records.size()); }
};

struct EvalAccuracy {
    double top1 = 0;
    double top5 = 0;
    long positions = 0;
};

// Teacher-forced unit logits under the model's variant (frame, fused,
// quantized or text-only conditioning).
Mat variant_unit_logits(const TasteModel& model, const Mat& features,
                        const corpus::Transcription& tr, int speaker,
                        const std::vector<int>& unit_prefix);

EvalAccuracy eval_unit_accuracy(const TasteModel& model, const Dataset& data,
                                const std::vector<int>& idx);

// Full tokenizer-phase training: encoder pretext then frozen, aggregator +
// quantizer (post-warmup) + unit decoder on the reconstruction objective.
TasteModel train_tokenizer(const RunConfig& rc, const Dataset& data,
                           metrics::MetricsLog* log);

// Word-aligned joint streams for the language model.
slm::JointSequence build_joint_sequence(const Dataset& data, const TasteModel& taste, int index);

// Text pretraining of the backbone followed by adapter-side joint training.
SlmModel train_slm(const RunConfig& rc, const Dataset& data, const TasteModel& taste,
                   metrics::MetricsLog* log);

double cosine_lr_scale(long step, long total_steps, bool enabled);

} // namespace taste::train
