#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace caitts::dsp {

struct AudioConfig {
    double sample_rate = 22050.0;
    double frame_length = 0.050;   // seconds
    double frame_shift = 0.0125;   // seconds
    std::size_t fft_size = 2048;   // power of two >= frame samples
    std::size_t n_mels = 80;
    double fmin = 0.0;
    double fmax = 0.0;             // 0 -> sample_rate / 2
    double pitch_fmin = 60.0;
    double pitch_fmax = 400.0;
    double voicing_threshold = 0.45;

    std::size_t frame_samples() const { return static_cast<std::size_t>(frame_length * sample_rate); }
    std::size_t hop_samples() const { return static_cast<std::size_t>(frame_shift * sample_rate); }
    double mel_fmax() const { return fmax > 0.0 ? fmax : sample_rate / 2.0; }
    void validate() const;
};

struct Waveform {
    std::vector<double> samples;
    double sample_rate = 22050.0;
};

// Magnitude spectra, [frames x (fft_size/2 + 1)].
struct SpectralFrames {
    std::size_t n_frames = 0;
    std::size_t n_bins = 0;
    std::vector<double> magnitudes;  // row-major

    double at(std::size_t f, std::size_t b) const { return magnitudes[f * n_bins + b]; }
};

struct ProsodyTrack {
    std::vector<double> pitch_hz;  // 0 where unvoiced
    std::vector<double> energy;
};

struct NormStats {
    double mean = 0.0;
    double std_dev = 1.0;
};

// In-place radix-2 FFT over interleaved complex data; n must be a power of two.
void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse);

std::size_t stft_frame_count(std::size_t len, std::size_t frame, std::size_t hop);

SpectralFrames stft(const Waveform& w, const AudioConfig& cfg);

std::vector<double> frame_energy(const SpectralFrames& s);

// Triangular mel filterbank, [n_mels x n_bins] row-major.
std::vector<double> mel_filterbank(const AudioConfig& cfg);

// Log-mel spectrogram, [frames x n_mels] row-major, floored at kMelFloor.
inline constexpr double kMelFloor = 1e-5;
std::vector<double> mel_spectrogram(const Waveform& w, const AudioConfig& cfg,
                                    std::size_t* out_frames = nullptr);

std::vector<double> extract_pitch(const Waveform& w, const AudioConfig& cfg);

ProsodyTrack extract_prosody(const Waveform& w, const AudioConfig& cfg);

// Mean per phoneme span. With voiced_only, averages only nonzero frames and
// yields 0 for a fully unvoiced span.
std::vector<double> phoneme_average(const std::vector<double>& frame_values,
                                    const std::vector<std::size_t>& durations,
                                    bool voiced_only = false);

inline constexpr double kStdFloor = 1e-8;
std::pair<NormStats, std::vector<double>> fit_normalize(const std::vector<double>& values);
std::vector<double> apply_normalize(const NormStats& st, const std::vector<double>& values);
std::vector<double> denormalize(const NormStats& st, const std::vector<double>& values);

// Mono WAV, 16-bit PCM or 32-bit float; resamples to target_rate when rates
// differ (windowed sinc).
Waveform read_wav(const std::string& path, double target_rate);
void write_wav(const std::string& path, const Waveform& w);
Waveform resample(const Waveform& w, double target_rate);

}  // namespace caitts::dsp
