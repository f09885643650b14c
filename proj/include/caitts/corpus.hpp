#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "caitts/dsp.hpp"
#include "caitts/ranker.hpp"

namespace caitts::corpus {

struct UtteranceRecord {
    std::string utterance_id;
    std::string speaker_id;
    int accent_id = 0;
    std::string domain;  // "L1" or "L2"
    std::string wav_path;
    std::vector<std::string> phonemes;       // ARPAbet
    std::vector<std::size_t> durations;      // frames per phoneme
    std::optional<double> intensity;         // filled for L2 by label_intensity
    int split = -1;                          // 0 train, 1 val, 2 test
    std::optional<double> true_magnitude;    // synthetic corpora only
};

// Accent-strength perturbation applied to the flat-prosody L1 base, scaled
// by the per-utterance magnitude.
struct PerturbationModel {
    double pitch_shift_hz = 30.0;
    double pitch_contour_gain_hz = 20.0;
    double energy_gain = 0.5;
    double duration_stretch = 0.3;
};

struct SyntheticSpec {
    std::size_t n_speakers = 2;
    std::size_t n_accents = 3;
    std::size_t utterances_per_speaker = 10;
    std::vector<double> accent_magnitudes = {0.2, 0.5, 1.0};
    PerturbationModel perturbation;
    double magnitude_jitter = 0.3;  // per-utterance uniform(1-j, 1+j) factor
    std::uint64_t seed = 1;
    dsp::AudioConfig audio;
};

struct CorpusManifest {
    std::string root;
    std::vector<UtteranceRecord> records;
    std::string metadata_json;  // generation / labeling provenance
};

const std::vector<std::string>& arpabet_inventory();
std::size_t phoneme_id(const std::string& name);

// Writes wavs under root/wav/ and root/manifest.tsv; paired L1/L2 per
// utterance id. Deterministic under spec.seed.
CorpusManifest generate_synthetic_corpus(const SyntheticSpec& spec, const std::string& root);

// Parses root/manifest.tsv, checks wavs, reconciles duration sums against
// mel frame counts (final-phoneme adjustment up to 3 frames).
CorpusManifest load_corpus(const std::string& root, const dsp::AudioConfig& cfg,
                           const std::string& manifest_path = "");

void save_manifest(const CorpusManifest& m, const std::string& filename);

// Per-speaker 8:1:1 assignment over utterance ids, both domains together.
void split_corpus(CorpusManifest& m, std::uint64_t seed);

struct LabelingOptions {
    double C = 1.0;
    std::size_t random_pairs = 0;  // 0 -> 2x matched-pair count
    std::uint64_t seed = 7;
    bool per_accent = false;       // default: one global ranker + bounds
    dsp::AudioConfig audio;
};

struct LabelingResult {
    std::vector<ranker::RankModel> models;
    // fraction of matched (L1, L2) pairs with score(L2) > score(L1)
    double ordered_pair_accuracy = 0.0;
};

// Fig.-2-style pipeline: prosody -> functionals -> rank training -> scoring
// -> normalized labels written into the L2 records.
LabelingResult label_intensity(CorpusManifest& m, const LabelingOptions& opt);

features::AccentFeatureVector utterance_features(const UtteranceRecord& rec,
                                                 const std::string& root,
                                                 const dsp::AudioConfig& cfg);

}  // namespace caitts::corpus
