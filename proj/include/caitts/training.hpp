#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "caitts/corpus.hpp"
#include "caitts/model.hpp"

namespace caitts::training {

struct TrainingItem {
    std::string utterance_id;
    std::vector<std::size_t> phoneme_ids;
    std::size_t speaker_index = 0;
    std::size_t accent_id = 0;
    model::TrainingTargets targets;
};

struct TrainingSet {
    std::vector<TrainingItem> items;
    dsp::NormStats pitch_stats;
    dsp::NormStats energy_stats;
    std::map<std::string, std::size_t> speaker_index;
};

// Extracts mel / prosody targets for every labeled L2 record and normalizes
// phoneme-level scalars over the whole set.
TrainingSet prepare_training_set(const corpus::CorpusManifest& m, const dsp::AudioConfig& audio,
                                 const model::ModelConfig& cfg);

struct TrainOptions {
    std::size_t steps = 2000;
    std::uint64_t seed = 11;
    bool with_consistency = true;
    nn::AdamConfig adam;
};

struct TrainLog {
    // eval-mode mean losses at each measured step
    struct Point {
        std::size_t step;
        double l_mel, l_dur, l_p_pitch, l_p_energy, l_cc, l_final;
    };
    std::vector<Point> points;
    std::vector<double> step_losses;  // train-mode l_final per step
};

// Eval-mode mean losses over the whole set.
TrainLog::Point evaluate_losses(const model::CaiTts& model, const TrainingSet& set,
                                std::size_t step, bool with_consistency);

TrainLog train(model::CaiTts& model, const TrainingSet& set, const TrainOptions& opt,
               std::size_t measure_every = 50);

}  // namespace caitts::training
