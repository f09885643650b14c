#pragma once

#include <array>
#include <string>
#include <vector>

#include "caitts/dsp.hpp"

namespace caitts::features {

inline constexpr std::size_t kFeatureDim = 36;

// Utterance-level functional vector over {F0, dF0, energy, dEnergy} x
// {mean, std, min, max, range, median, skewness, kurtosis, slope}.
struct AccentFeatureVector {
    std::array<double, kFeatureDim> values{};
    std::string utterance_id;
    std::string speaker_id;
    int accent_id = 0;
};

// The 9 functionals of one value sequence, in the fixed documented order.
std::array<double, 9> functionals(const std::vector<double>& xs);

AccentFeatureVector compute_functionals(const dsp::ProsodyTrack& t);

// TSV with header "utterance_id speaker_id accent_id f00..f35"; L1 and L2
// vectors live in separate files.
void write_feature_tsv(const std::string& path, const std::vector<AccentFeatureVector>& vs);
std::vector<AccentFeatureVector> read_feature_tsv(const std::string& path);

}  // namespace caitts::features
