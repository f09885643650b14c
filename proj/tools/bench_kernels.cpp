// Timing harness for the OpenMP kernels against their serial references.

#include <chrono>
#include <cstdio>
#include <random>
#include <vector>

#include "caitts/dsp.hpp"
#include "caitts/nn.hpp"

namespace {

using clock_t_ = std::chrono::steady_clock;

double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    const auto t0 = clock_t_::now();
    for (int i = 0; i < reps; ++i) fn();
    const auto t1 = clock_t_::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

}  // namespace

int main() {
    std::mt19937_64 rng(12345);
    std::uniform_real_distribution<double> dist(-1.0, 1.0);

    std::printf("%-28s %10s %10s %8s\n", "kernel", "serial ms", "openmp ms", "speedup");

    for (std::size_t n : {64, 256, 512}) {
        std::vector<double> a(n * n), b(n * n), c(n * n), d(n * n);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);
        const double ts =
            time_ms([&] { caitts::nn::matmul_serial(a.data(), b.data(), c.data(), n, n, n); }, 5);
        const double tp =
            time_ms([&] { caitts::nn::matmul_parallel(a.data(), b.data(), d.data(), n, n, n); }, 5);
        double max_diff = 0.0;
        for (std::size_t i = 0; i < n * n; ++i) max_diff = std::max(max_diff, std::abs(c[i] - d[i]));
        char name[64];
        std::snprintf(name, sizeof(name), "matmul %zux%zux%zu", n, n, n);
        std::printf("%-28s %10.3f %10.3f %7.2fx   (max diff %.3g)\n", name, ts, tp, ts / tp,
                    max_diff);
    }

    {
        caitts::dsp::AudioConfig cfg;
        caitts::dsp::Waveform w;
        w.sample_rate = cfg.sample_rate;
        w.samples.resize(static_cast<std::size_t>(cfg.sample_rate) * 3);
        for (auto& v : w.samples) v = dist(rng);
        const double t = time_ms([&] { caitts::dsp::stft(w, cfg); }, 3);
        std::printf("%-28s %10s %10.3f\n", "stft 3s audio (openmp)", "-", t);
    }
    return 0;
}
