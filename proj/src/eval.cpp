#include "caitts/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include <nlohmann/json.hpp>

#include "caitts/error.hpp"

namespace caitts::eval {

namespace {
constexpr double kPi = std::numbers::pi;

std::vector<double> voiced_only(const std::vector<double>& track) {
    std::vector<double> v;
    for (double p : track)
        if (p != 0.0) v.push_back(p);
    return v;
}
}  // namespace

std::vector<double> mel_cepstra(const std::vector<double>& log_mel, std::size_t n_frames,
                                std::size_t n_mels, std::size_t order) {
    std::vector<double> ceps(n_frames * order);
    for (std::size_t f = 0; f < n_frames; ++f) {
        const double* row = &log_mel[f * n_mels];
        for (std::size_t k = 1; k <= order; ++k) {
            double acc = 0.0;
            for (std::size_t m = 0; m < n_mels; ++m)
                acc += row[m] * std::cos(kPi * static_cast<double>(k) *
                                         (static_cast<double>(m) + 0.5) /
                                         static_cast<double>(n_mels));
            ceps[f * order + k - 1] = acc;
        }
    }
    return ceps;
}

std::vector<std::pair<std::size_t, std::size_t>> dtw_path(
    std::size_t n_a, std::size_t n_b,
    const std::function<double(std::size_t, std::size_t)>& cost) {
    if (n_a == 0 || n_b == 0) throw EmptyInput("dtw over empty sequence");
    const double inf = std::numeric_limits<double>::infinity();
    std::vector<double> acc(n_a * n_b, inf);
    std::vector<std::uint8_t> move(n_a * n_b, 0);  // 0 diag, 1 up (i-1), 2 left (j-1)
    for (std::size_t i = 0; i < n_a; ++i)
        for (std::size_t j = 0; j < n_b; ++j) {
            const double c = cost(i, j);
            if (i == 0 && j == 0) {
                acc[0] = c;
                continue;
            }
            double best = inf;
            std::uint8_t mv = 0;
            if (i > 0 && j > 0 && acc[(i - 1) * n_b + j - 1] < best) {
                best = acc[(i - 1) * n_b + j - 1];
                mv = 0;
            }
            if (i > 0 && acc[(i - 1) * n_b + j] < best) {
                best = acc[(i - 1) * n_b + j];
                mv = 1;
            }
            if (j > 0 && acc[i * n_b + j - 1] < best) {
                best = acc[i * n_b + j - 1];
                mv = 2;
            }
            acc[i * n_b + j] = best + c;
            move[i * n_b + j] = mv;
        }

    std::vector<std::pair<std::size_t, std::size_t>> path;
    std::size_t i = n_a - 1, j = n_b - 1;
    path.emplace_back(i, j);
    while (i > 0 || j > 0) {
        switch (move[i * n_b + j]) {
            case 0: --i; --j; break;
            case 1: --i; break;
            default: --j; break;
        }
        path.emplace_back(i, j);
    }
    std::reverse(path.begin(), path.end());
    return path;
}

double mcd_dtw(const std::vector<double>& mel_a, std::size_t frames_a,
               const std::vector<double>& mel_b, std::size_t frames_b, std::size_t n_mels) {
    if (frames_a == 0 || frames_b == 0) throw EmptyInput("mcd_dtw on empty mel");
    const std::size_t K = kCepstralOrder;
    const std::vector<double> ca = mel_cepstra(mel_a, frames_a, n_mels, K);
    const std::vector<double> cb = mel_cepstra(mel_b, frames_b, n_mels, K);
    auto dist = [&](std::size_t i, std::size_t j) {
        double acc = 0.0;
        for (std::size_t k = 0; k < K; ++k) {
            const double d = ca[i * K + k] - cb[j * K + k];
            acc += d * d;
        }
        return std::sqrt(acc);
    };
    const auto path = dtw_path(frames_a, frames_b, dist);
    double mean = 0.0;
    for (const auto& [i, j] : path) mean += dist(i, j);
    mean /= static_cast<double>(path.size());
    return 10.0 / std::log(10.0) * std::sqrt(2.0) * mean;
}

PitchMoments pitch_moments(const std::vector<double>& pooled_pitch) {
    const std::vector<double> v = voiced_only(pooled_pitch);
    if (v.size() < 2) throw InsufficientData("need >= 2 voiced pitch values");
    const double n = static_cast<double>(v.size());
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= n;
    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double x : v) {
        const double d = x - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    PitchMoments pm;
    pm.sigma = std::sqrt(m2);
    pm.skewness = pm.sigma < 1e-8 ? 0.0 : m3 / (m2 * pm.sigma);
    pm.kurtosis = pm.sigma < 1e-8 ? 0.0 : m4 / (m2 * m2) - 3.0;
    return pm;
}

double pitch_dtw(const std::vector<double>& track_a, const std::vector<double>& track_b) {
    const std::vector<double> a = voiced_only(track_a);
    const std::vector<double> b = voiced_only(track_b);
    if (a.empty() || b.empty()) throw InsufficientData("pitch_dtw needs voiced frames");
    auto dist = [&](std::size_t i, std::size_t j) { return std::abs(a[i] - b[j]); };
    const auto path = dtw_path(a.size(), b.size(), dist);
    double mean = 0.0;
    for (const auto& [i, j] : path) mean += dist(i, j);
    return mean / static_cast<double>(path.size());
}

double energy_mae_dtw(const std::vector<double>& e_a, const std::vector<double>& e_b) {
    if (e_a.empty() || e_b.empty()) throw EmptyInput("energy_mae_dtw on empty sequence");
    auto dist = [&](std::size_t i, std::size_t j) { return std::abs(e_a[i] - e_b[j]); };
    const auto path = dtw_path(e_a.size(), e_b.size(), dist);
    double mean = 0.0;
    for (const auto& [i, j] : path) mean += dist(i, j);
    return mean / static_cast<double>(path.size());
}

double duration_boundary_delta(const std::vector<std::size_t>& pred,
                               const std::vector<std::size_t>& gt, double frame_shift_s) {
    if (pred.size() != gt.size()) throw AlignmentMismatch("phoneme count mismatch");
    if (pred.empty()) throw EmptyInput("no durations");
    double acc = 0.0;
    long long cp = 0, cg = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        cp += static_cast<long long>(pred[i]);
        cg += static_cast<long long>(gt[i]);
        acc += std::abs(static_cast<double>(cp - cg));
    }
    return acc / static_cast<double>(pred.size()) * frame_shift_s * 1000.0;
}

IntensityBand categorize_intensity(double i) {
    if (i < 0.35) return IntensityBand::Slight;
    if (i < 0.65) return IntensityBand::Average;
    return IntensityBand::Strong;
}

const char* band_name(IntensityBand b) {
    switch (b) {
        case IntensityBand::Slight: return "slight";
        case IntensityBand::Average: return "average";
        default: return "strong";
    }
}

namespace {
std::size_t nearest_ninth(double v) {
    // nearest of {0.1, ..., 0.9}
    const long long k = std::llround(v * 10.0);
    return static_cast<std::size_t>(std::clamp(k, 1ll, 9ll) - 1);
}
}  // namespace

void intensity_confusion(const std::vector<std::pair<double, double>>& pairs,
                         std::array<std::array<std::size_t, 3>, 3>& coarse,
                         std::array<std::array<std::size_t, 9>, 9>& fine) {
    if (pairs.empty()) throw EmptyInput("no intensity pairs");
    for (auto& row : coarse) row.fill(0);
    for (auto& row : fine) row.fill(0);
    for (const auto& [intended, predicted] : pairs) {
        coarse[static_cast<std::size_t>(categorize_intensity(intended))]
              [static_cast<std::size_t>(categorize_intensity(predicted))]++;
        fine[nearest_ninth(intended)][nearest_ninth(predicted)]++;
    }
}

std::string EvalReport::to_json() const {
    nlohmann::json j;
    j["mcd_db"] = mcd_db;
    j["pitch"] = {{"sigma", pitch.sigma}, {"skewness", pitch.skewness}, {"kurtosis", pitch.kurtosis}};
    j["pitch_dtw"] = pitch_dtw;
    j["energy_mae"] = energy_mae;
    j["duration_delta_ms"] = duration_delta_ms;
    j["coarse_confusion"] = coarse_confusion;
    j["fine_confusion"] = fine_confusion;
    return j.dump(2);
}

}  // namespace caitts::eval
