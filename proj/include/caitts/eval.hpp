#pragma once

#include <array>
#include <functional>
#include <string>
#include <utility>
#include <vector>

namespace caitts::eval {

struct PitchMoments {
    double sigma = 0.0;
    double skewness = 0.0;
    double kurtosis = 0.0;  // excess
};

enum class IntensityBand { Slight = 0, Average = 1, Strong = 2 };

struct EvalReport {
    double mcd_db = 0.0;
    PitchMoments pitch;
    double pitch_dtw = 0.0;
    double energy_mae = 0.0;
    double duration_delta_ms = 0.0;
    std::array<std::array<std::size_t, 3>, 3> coarse_confusion{};
    std::array<std::array<std::size_t, 9>, 9> fine_confusion{};

    std::string to_json() const;
};

inline constexpr std::size_t kCepstralOrder = 13;

// DCT-II cepstra of log-mel rows, coefficients 1..K.
std::vector<double> mel_cepstra(const std::vector<double>& log_mel, std::size_t n_frames,
                                std::size_t n_mels, std::size_t order = kCepstralOrder);

// DTW alignment path (pairs of frame indices) under a local cost callback.
std::vector<std::pair<std::size_t, std::size_t>> dtw_path(
    std::size_t n_a, std::size_t n_b,
    const std::function<double(std::size_t, std::size_t)>& cost);

double mcd_dtw(const std::vector<double>& mel_a, std::size_t frames_a,
               const std::vector<double>& mel_b, std::size_t frames_b, std::size_t n_mels);

PitchMoments pitch_moments(const std::vector<double>& pooled_pitch);

// DTW over voiced-frame pitch values, absolute-difference cost, mean over
// the path.
double pitch_dtw(const std::vector<double>& track_a, const std::vector<double>& track_b);

double energy_mae_dtw(const std::vector<double>& e_a, const std::vector<double>& e_b);

double duration_boundary_delta(const std::vector<std::size_t>& pred,
                               const std::vector<std::size_t>& gt, double frame_shift_s);

IntensityBand categorize_intensity(double i);
const char* band_name(IntensityBand b);

// (intended, predicted) intensity pairs -> coarse 3x3 and fine 9x9 counts.
void intensity_confusion(const std::vector<std::pair<double, double>>& pairs,
                         std::array<std::array<std::size_t, 3>, 3>& coarse,
                         std::array<std::array<std::size_t, 9>, 9>& fine);

}  // namespace caitts::eval
