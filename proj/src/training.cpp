#include "caitts/training.hpp"

#include <filesystem>
#include <random>

#include "caitts/error.hpp"

namespace caitts::training {

namespace fs = std::filesystem;

TrainingSet prepare_training_set(const corpus::CorpusManifest& m, const dsp::AudioConfig& audio,
                                 const model::ModelConfig& cfg) {
    TrainingSet set;
    std::vector<const corpus::UtteranceRecord*> l2;
    for (const auto& r : m.records)
        if (r.domain == "L2") {
            if (!r.intensity) throw ConfigError(r.utterance_id + " has no intensity label");
            l2.push_back(&r);
            if (!set.speaker_index.count(r.speaker_id))
                set.speaker_index[r.speaker_id] = set.speaker_index.size();
        }
    if (l2.empty()) throw EmptyInput("no labeled L2 records");

    set.items.resize(l2.size());
    std::vector<std::vector<double>> pitch_per_item(l2.size()), energy_per_item(l2.size());
#pragma omp parallel for schedule(dynamic)
    for (long long i = 0; i < static_cast<long long>(l2.size()); ++i) {
        const auto& r = *l2[i];
        const dsp::Waveform w =
            dsp::read_wav((fs::path(m.root) / r.wav_path).string(), audio.sample_rate);
        TrainingItem item;
        item.utterance_id = r.utterance_id;
        for (const auto& ph : r.phonemes) item.phoneme_ids.push_back(corpus::phoneme_id(ph));
        item.speaker_index = set.speaker_index.at(r.speaker_id);
        item.accent_id = static_cast<std::size_t>(r.accent_id);

        std::size_t frames = 0;
        item.targets.mel = dsp::mel_spectrogram(w, audio, &frames);
        item.targets.n_frames = frames;
        item.targets.durations = r.durations;
        item.targets.intensity = *r.intensity;

        const dsp::ProsodyTrack track = dsp::extract_prosody(w, audio);
        pitch_per_item[i] = dsp::phoneme_average(track.pitch_hz, r.durations, true);
        energy_per_item[i] = dsp::phoneme_average(track.energy, r.durations, false);
        set.items[i] = std::move(item);
    }

    if (cfg.mel_dim != audio.n_mels) throw ConfigError("model mel_dim != audio n_mels");
    for (const auto& item : set.items)
        if (item.speaker_index >= cfg.n_speakers || item.accent_id >= cfg.n_accents)
            throw ConfigError("corpus exceeds model speaker/accent table size");

    // normalization over all training data
    std::vector<double> all_pitch, all_energy;
    for (const auto& v : pitch_per_item) all_pitch.insert(all_pitch.end(), v.begin(), v.end());
    for (const auto& v : energy_per_item) all_energy.insert(all_energy.end(), v.begin(), v.end());
    set.pitch_stats = dsp::fit_normalize(all_pitch).first;
    set.energy_stats = dsp::fit_normalize(all_energy).first;
    for (std::size_t i = 0; i < set.items.size(); ++i) {
        set.items[i].targets.phoneme_pitch = dsp::apply_normalize(set.pitch_stats, pitch_per_item[i]);
        set.items[i].targets.phoneme_energy =
            dsp::apply_normalize(set.energy_stats, energy_per_item[i]);
    }
    return set;
}

TrainLog::Point evaluate_losses(const model::CaiTts& model, const TrainingSet& set,
                                std::size_t step, bool with_consistency) {
    std::mt19937_64 rng(0);
    TrainLog::Point p{step, 0, 0, 0, 0, 0, 0};
    for (const auto& item : set.items) {
        const model::Losses l =
            model.training_step_forward(item.phoneme_ids, item.speaker_index, item.accent_id,
                                        item.targets, with_consistency, false, rng);
        p.l_mel += l.l_mel.item();
        p.l_dur += l.l_dur.item();
        p.l_p_pitch += l.l_p_pitch.item();
        p.l_p_energy += l.l_p_energy.item();
        p.l_cc += l.l_cc.item();
        p.l_final += l.l_final.item();
    }
    const double n = static_cast<double>(set.items.size());
    p.l_mel /= n;
    p.l_dur /= n;
    p.l_p_pitch /= n;
    p.l_p_energy /= n;
    p.l_cc /= n;
    p.l_final /= n;
    return p;
}

TrainLog train(model::CaiTts& model, const TrainingSet& set, const TrainOptions& opt,
               std::size_t measure_every) {
    if (set.items.empty()) throw EmptyInput("empty training set");
    std::mt19937_64 rng(opt.seed);
    nn::AdamOptimizer optimizer(model.params(), opt.adam);
    TrainLog log;
    for (std::size_t step = 1; step <= opt.steps; ++step) {
        const TrainingItem& item = set.items[(step - 1) % set.items.size()];
        model.params().zero_grad();
        const model::Losses l =
            model.training_step_forward(item.phoneme_ids, item.speaker_index, item.accent_id,
                                        item.targets, opt.with_consistency, true, rng);
        l.l_final.backward();
        optimizer.step();
        log.step_losses.push_back(l.l_final.item());
        if (measure_every > 0 && (step % measure_every == 0 || step == opt.steps))
            log.points.push_back(evaluate_losses(model, set, step, opt.with_consistency));
    }
    return log;
}

}  // namespace caitts::training
