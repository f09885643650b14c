#include "caitts/dsp.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "caitts/error.hpp"

namespace caitts::dsp {

namespace {
constexpr double kPi = std::numbers::pi;

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }
}  // namespace

void AudioConfig::validate() const {
    if (!(frame_shift < frame_length)) throw ConfigError("frame_shift must be < frame_length");
    if (n_mels < 1) throw ConfigError("n_mels must be >= 1");
    if (!(pitch_fmin < pitch_fmax && pitch_fmax < sample_rate / 2.0))
        throw ConfigError("pitch band must satisfy fmin < fmax < nyquist");
    if (fft_size < frame_samples() || (fft_size & (fft_size - 1)) != 0)
        throw ConfigError("fft_size must be a power of two >= frame samples");
}

void fft_radix2(std::vector<double>& re, std::vector<double>& im, bool inverse) {
    const std::size_t n = re.size();
    if (n == 0 || (n & (n - 1)) != 0 || im.size() != n)
        throw ConfigError("fft size must be a power of two");
    // bit reversal
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = 2.0 * kPi / static_cast<double>(len) * (inverse ? 1.0 : -1.0);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (std::size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::size_t a = i + k, b = i + k + len / 2;
                const double ur = re[a], ui = im[a];
                const double vr = re[b] * cr - im[b] * ci;
                const double vi = re[b] * ci + im[b] * cr;
                re[a] = ur + vr;
                im[a] = ui + vi;
                re[b] = ur - vr;
                im[b] = ui - vi;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
    if (inverse) {
        for (std::size_t i = 0; i < n; ++i) {
            re[i] /= static_cast<double>(n);
            im[i] /= static_cast<double>(n);
        }
    }
}

std::size_t stft_frame_count(std::size_t len, std::size_t frame, std::size_t hop) {
    if (len < frame) throw InputTooShort("waveform shorter than one frame");
    return 1 + (len - frame) / hop;
}

SpectralFrames stft(const Waveform& w, const AudioConfig& cfg) {
    cfg.validate();
    const std::size_t frame = cfg.frame_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t n_frames = stft_frame_count(w.samples.size(), frame, hop);
    const std::size_t n_bins = cfg.fft_size / 2 + 1;

    std::vector<double> window(frame);
    for (std::size_t i = 0; i < frame; ++i)
        window[i] = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(frame - 1));

    SpectralFrames out;
    out.n_frames = n_frames;
    out.n_bins = n_bins;
    out.magnitudes.assign(n_frames * n_bins, 0.0);

#pragma omp parallel for schedule(static)
    for (long long fi = 0; fi < static_cast<long long>(n_frames); ++fi) {
        std::vector<double> re(cfg.fft_size, 0.0), im(cfg.fft_size, 0.0);
        const std::size_t off = static_cast<std::size_t>(fi) * hop;
        for (std::size_t i = 0; i < frame; ++i) re[i] = w.samples[off + i] * window[i];
        fft_radix2(re, im, false);
        double* row = &out.magnitudes[static_cast<std::size_t>(fi) * n_bins];
        for (std::size_t b = 0; b < n_bins; ++b) row[b] = std::hypot(re[b], im[b]);
    }
    return out;
}

std::vector<double> frame_energy(const SpectralFrames& s) {
    std::vector<double> e(s.n_frames, 0.0);
    for (std::size_t f = 0; f < s.n_frames; ++f) {
        double acc = 0.0;
        const double* row = &s.magnitudes[f * s.n_bins];
        for (std::size_t b = 0; b < s.n_bins; ++b) acc += row[b] * row[b];
        e[f] = std::sqrt(acc);
    }
    return e;
}

std::vector<double> mel_filterbank(const AudioConfig& cfg) {
    const std::size_t n_bins = cfg.fft_size / 2 + 1;
    const double mel_lo = hz_to_mel(cfg.fmin);
    const double mel_hi = hz_to_mel(cfg.mel_fmax());
    std::vector<double> centers(cfg.n_mels + 2);
    for (std::size_t m = 0; m < centers.size(); ++m)
        centers[m] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(m) /
                                            static_cast<double>(cfg.n_mels + 1));

    std::vector<double> fb(cfg.n_mels * n_bins, 0.0);
    for (std::size_t m = 0; m < cfg.n_mels; ++m) {
        const double lo = centers[m], mid = centers[m + 1], hi = centers[m + 2];
        for (std::size_t b = 0; b < n_bins; ++b) {
            const double f = static_cast<double>(b) * cfg.sample_rate / static_cast<double>(cfg.fft_size);
            double v = 0.0;
            if (f > lo && f < mid)
                v = (f - lo) / (mid - lo);
            else if (f >= mid && f < hi)
                v = (hi - f) / (hi - mid);
            fb[m * n_bins + b] = v;
        }
    }
    return fb;
}

std::vector<double> mel_spectrogram(const Waveform& w, const AudioConfig& cfg, std::size_t* out_frames) {
    const SpectralFrames s = stft(w, cfg);
    const std::vector<double> fb = mel_filterbank(cfg);
    const std::size_t n_bins = s.n_bins;
    std::vector<double> mel(s.n_frames * cfg.n_mels, 0.0);
#pragma omp parallel for schedule(static)
    for (long long f = 0; f < static_cast<long long>(s.n_frames); ++f) {
        const double* row = &s.magnitudes[static_cast<std::size_t>(f) * n_bins];
        for (std::size_t m = 0; m < cfg.n_mels; ++m) {
            double acc = 0.0;
            const double* w_row = &fb[m * n_bins];
            for (std::size_t b = 0; b < n_bins; ++b) acc += w_row[b] * row[b];
            mel[static_cast<std::size_t>(f) * cfg.n_mels + m] = std::log(std::max(acc, kMelFloor));
        }
    }
    if (out_frames) *out_frames = s.n_frames;
    return mel;
}

std::vector<double> extract_pitch(const Waveform& w, const AudioConfig& cfg) {
    cfg.validate();
    const std::size_t frame = cfg.frame_samples();
    const std::size_t hop = cfg.hop_samples();
    const std::size_t n_frames = stft_frame_count(w.samples.size(), frame, hop);

    const std::size_t lag_min = static_cast<std::size_t>(cfg.sample_rate / cfg.pitch_fmax);
    const std::size_t lag_max = std::min<std::size_t>(
        static_cast<std::size_t>(cfg.sample_rate / cfg.pitch_fmin), frame - 1);

    std::vector<double> pitch(n_frames, 0.0);
#pragma omp parallel for schedule(static)
    for (long long fi = 0; fi < static_cast<long long>(n_frames); ++fi) {
        const double* x = &w.samples[static_cast<std::size_t>(fi) * hop];
        double e0 = 0.0;
        for (std::size_t i = 0; i < frame; ++i) e0 += x[i] * x[i];
        if (e0 <= 0.0) continue;

        // normalized autocorrelation over the lag band
        double best = 0.0;
        std::size_t best_lag = 0;
        std::vector<double> nac(lag_max + 1, 0.0);
        for (std::size_t lag = lag_min; lag <= lag_max; ++lag) {
            double num = 0.0, ea = 0.0, eb = 0.0;
            for (std::size_t i = 0; i + lag < frame; ++i) {
                num += x[i] * x[i + lag];
                ea += x[i] * x[i];
                eb += x[i + lag] * x[i + lag];
            }
            const double den = std::sqrt(ea * eb);
            nac[lag] = den > 0.0 ? num / den : 0.0;
            if (nac[lag] > best) {
                best = nac[lag];
                best_lag = lag;
            }
        }
        if (best < cfg.voicing_threshold || best_lag == 0) continue;

        // Subharmonic guard: lags at integer multiples of the true period score
        // nearly as high as the true lag, so the global maximum can land an
        // octave (or more) low.  Prefer the smallest local peak whose score is
        // within a small factor of the global best.
        const double peak_floor = std::max(cfg.voicing_threshold, 0.9 * best);
        for (std::size_t lag = lag_min; lag < best_lag; ++lag) {
            if (nac[lag] < peak_floor) continue;
            const double left = lag > lag_min ? nac[lag - 1] : -1.0;
            const double right = lag < lag_max ? nac[lag + 1] : -1.0;
            if (nac[lag] >= left && nac[lag] >= right) {
                best_lag = lag;
                break;
            }
        }

        // parabolic interpolation around the peak
        double lag_refined = static_cast<double>(best_lag);
        if (best_lag > lag_min && best_lag < lag_max) {
            const double ym1 = nac[best_lag - 1], y0 = nac[best_lag], yp1 = nac[best_lag + 1];
            const double denom = ym1 - 2.0 * y0 + yp1;
            if (std::abs(denom) > 1e-12) lag_refined += 0.5 * (ym1 - yp1) / denom;
        }
        const double f0 = cfg.sample_rate / lag_refined;
        if (f0 >= cfg.pitch_fmin && f0 <= cfg.pitch_fmax) pitch[fi] = f0;
    }
    return pitch;
}

ProsodyTrack extract_prosody(const Waveform& w, const AudioConfig& cfg) {
    ProsodyTrack t;
    t.energy = frame_energy(stft(w, cfg));
    t.pitch_hz = extract_pitch(w, cfg);
    return t;
}

std::vector<double> phoneme_average(const std::vector<double>& frame_values,
                                    const std::vector<std::size_t>& durations,
                                    bool voiced_only) {
    std::size_t total = 0;
    for (std::size_t d : durations) {
        if (d == 0) throw AlignmentMismatch("zero phoneme duration");
        total += d;
    }
    if (total != frame_values.size())
        throw AlignmentMismatch("durations sum " + std::to_string(total) + " != frame count " +
                                std::to_string(frame_values.size()));

    std::vector<double> out;
    out.reserve(durations.size());
    std::size_t off = 0;
    for (std::size_t d : durations) {
        double acc = 0.0;
        std::size_t n = 0;
        for (std::size_t i = 0; i < d; ++i) {
            const double v = frame_values[off + i];
            if (voiced_only && v == 0.0) continue;
            acc += v;
            ++n;
        }
        out.push_back(n > 0 ? acc / static_cast<double>(n) : 0.0);
        off += d;
    }
    return out;
}

std::pair<NormStats, std::vector<double>> fit_normalize(const std::vector<double>& values) {
    if (values.empty()) throw EmptyInput("fit_normalize on empty sequence");
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    NormStats st{mean, std::max(std::sqrt(var), kStdFloor)};
    return {st, apply_normalize(st, values)};
}

std::vector<double> apply_normalize(const NormStats& st, const std::vector<double>& values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - st.mean) / st.std_dev;
    return out;
}

std::vector<double> denormalize(const NormStats& st, const std::vector<double>& values) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * st.std_dev + st.mean;
    return out;
}

namespace {

template <typename T>
T read_le(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
}

template <typename T>
void write_le(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

double sinc(double x) { return x == 0.0 ? 1.0 : std::sin(kPi * x) / (kPi * x); }

}  // namespace

Waveform resample(const Waveform& w, double target_rate) {
    if (w.sample_rate == target_rate) return w;
    const double ratio = target_rate / w.sample_rate;
    const std::size_t out_len = static_cast<std::size_t>(
        std::floor(static_cast<double>(w.samples.size()) * ratio));
    const double cutoff = std::min(1.0, ratio);  // anti-alias when downsampling
    constexpr int kHalfTaps = 16;

    Waveform out;
    out.sample_rate = target_rate;
    out.samples.resize(out_len);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(out_len); ++i) {
        const double center = static_cast<double>(i) / ratio;
        const long long lo = static_cast<long long>(std::floor(center)) - kHalfTaps + 1;
        double acc = 0.0;
        for (long long j = lo; j < lo + 2 * kHalfTaps; ++j) {
            if (j < 0 || j >= static_cast<long long>(w.samples.size())) continue;
            const double t = center - static_cast<double>(j);
            // Hann-windowed sinc
            const double win = 0.5 + 0.5 * std::cos(kPi * t / kHalfTaps);
            acc += w.samples[j] * cutoff * sinc(cutoff * t) * win;
        }
        out.samples[i] = std::clamp(acc, -1.0, 1.0);
    }
    return out;
}

Waveform read_wav(const std::string& path, double target_rate) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingAsset("cannot open " + path);

    char tag[5] = {};
    in.read(tag, 4);
    if (std::strncmp(tag, "RIFF", 4) != 0) throw ParseError(path + ": not a RIFF file");
    read_le<std::uint32_t>(in);
    in.read(tag, 4);
    if (std::strncmp(tag, "WAVE", 4) != 0) throw ParseError(path + ": not a WAVE file");

    std::uint16_t format = 0, channels = 0, bits = 0;
    std::uint32_t rate = 0;
    std::vector<char> data;
    while (in.read(tag, 4)) {
        const std::uint32_t size = read_le<std::uint32_t>(in);
        if (std::strncmp(tag, "fmt ", 4) == 0) {
            format = read_le<std::uint16_t>(in);
            channels = read_le<std::uint16_t>(in);
            rate = read_le<std::uint32_t>(in);
            read_le<std::uint32_t>(in);
            read_le<std::uint16_t>(in);
            bits = read_le<std::uint16_t>(in);
            in.seekg(size > 16 ? size - 16 : 0, std::ios::cur);
        } else if (std::strncmp(tag, "data", 4) == 0) {
            data.resize(size);
            in.read(data.data(), size);
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
    }
    if (channels != 1) throw ParseError(path + ": only mono WAV supported");
    if (data.empty()) throw ParseError(path + ": missing data chunk");

    Waveform w;
    w.sample_rate = static_cast<double>(rate);
    if (format == 1 && bits == 16) {
        const std::size_t n = data.size() / 2;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            std::int16_t s;
            std::memcpy(&s, &data[i * 2], 2);
            w.samples[i] = static_cast<double>(s) / 32768.0;
        }
    } else if (format == 3 && bits == 32) {
        const std::size_t n = data.size() / 4;
        w.samples.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            float s;
            std::memcpy(&s, &data[i * 4], 4);
            w.samples[i] = static_cast<double>(s);
        }
    } else {
        throw ParseError(path + ": unsupported WAV encoding (need 16-bit PCM or 32-bit float)");
    }
    return resample(w, target_rate);
}

void write_wav(const std::string& path, const Waveform& w) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingAsset("cannot write " + path);
    const std::uint32_t rate = static_cast<std::uint32_t>(w.sample_rate);
    const std::uint32_t data_size = static_cast<std::uint32_t>(w.samples.size() * 2);
    out.write("RIFF", 4);
    write_le<std::uint32_t>(out, 36 + data_size);
    out.write("WAVE", 4);
    out.write("fmt ", 4);
    write_le<std::uint32_t>(out, 16);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint16_t>(out, 1);
    write_le<std::uint32_t>(out, rate);
    write_le<std::uint32_t>(out, rate * 2);
    write_le<std::uint16_t>(out, 2);
    write_le<std::uint16_t>(out, 16);
    out.write("data", 4);
    write_le<std::uint32_t>(out, data_size);
    for (double v : w.samples) {
        const double c = std::clamp(v, -1.0, 1.0);
        write_le<std::int16_t>(out, static_cast<std::int16_t>(std::lround(c * 32767.0)));
    }
}

}  // namespace caitts::dsp
