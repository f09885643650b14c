#include "caitts/accent_features.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "caitts/error.hpp"

namespace caitts::features {

namespace {

std::vector<double> delta(const std::vector<double>& xs) {
    if (xs.size() < 2) return {};
    std::vector<double> d(xs.size() - 1);
    for (std::size_t i = 0; i + 1 < xs.size(); ++i) d[i] = xs[i + 1] - xs[i];
    return d;
}

}  // namespace

std::array<double, 9> functionals(const std::vector<double>& xs) {
    std::array<double, 9> out{};
    if (xs.empty()) return out;
    const double n = static_cast<double>(xs.size());

    double mean = 0.0;
    for (double v : xs) mean += v;
    mean /= n;

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : xs) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const double sd = std::sqrt(m2);

    const auto [mn_it, mx_it] = std::minmax_element(xs.begin(), xs.end());

    std::vector<double> sorted = xs;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t k = sorted.size();
    const double median = (k % 2 == 1) ? sorted[k / 2] : 0.5 * (sorted[k / 2 - 1] + sorted[k / 2]);

    // least-squares slope over frame index
    double slope = 0.0;
    if (xs.size() >= 2) {
        const double tbar = (n - 1.0) / 2.0;
        double num = 0.0, den = 0.0;
        for (std::size_t i = 0; i < xs.size(); ++i) {
            const double dt = static_cast<double>(i) - tbar;
            num += dt * (xs[i] - mean);
            den += dt * dt;
        }
        slope = num / den;
    }

    out[0] = mean;
    out[1] = sd;
    out[2] = *mn_it;
    out[3] = *mx_it;
    out[4] = *mx_it - *mn_it;
    out[5] = median;
    out[6] = sd < 1e-8 ? 0.0 : m3 / (m2 * sd);        // population skewness
    out[7] = sd < 1e-8 ? 0.0 : m4 / (m2 * m2) - 3.0;  // excess kurtosis
    out[8] = slope;
    return out;
}

AccentFeatureVector compute_functionals(const dsp::ProsodyTrack& t) {
    if (t.pitch_hz.empty() || t.energy.empty()) throw EmptyTrack("empty prosody track");
    if (t.pitch_hz.size() != t.energy.size())
        throw AlignmentMismatch("pitch/energy length mismatch");

    std::vector<double> voiced;
    for (double p : t.pitch_hz)
        if (p != 0.0) voiced.push_back(p);

    AccentFeatureVector out;
    const std::array<std::vector<double>, 4> tracks = {voiced, delta(voiced), t.energy,
                                                       delta(t.energy)};
    for (std::size_t ti = 0; ti < 4; ++ti) {
        const std::array<double, 9> f = functionals(tracks[ti]);
        for (std::size_t fi = 0; fi < 9; ++fi) out.values[ti * 9 + fi] = f[fi];
    }
    return out;
}

void write_feature_tsv(const std::string& path, const std::vector<AccentFeatureVector>& vs) {
    std::ofstream out(path);
    if (!out) throw MissingAsset("cannot write " + path);
    out << "utterance_id\tspeaker_id\taccent_id";
    for (std::size_t i = 0; i < kFeatureDim; ++i) {
        out << "\tf" << (i < 10 ? "0" : "") << i;
    }
    out << "\n";
    out.precision(17);
    for (const auto& v : vs) {
        out << v.utterance_id << '\t' << v.speaker_id << '\t' << v.accent_id;
        for (double x : v.values) out << '\t' << x;
        out << "\n";
    }
}

std::vector<AccentFeatureVector> read_feature_tsv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingAsset("cannot open " + path);
    std::string line;
    if (!std::getline(in, line)) throw ParseError(path + ": empty file");
    std::vector<AccentFeatureVector> out;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::istringstream ss(line);
        AccentFeatureVector v;
        if (!(ss >> v.utterance_id >> v.speaker_id >> v.accent_id))
            throw ParseError(path + ":" + std::to_string(lineno) + ": bad row");
        for (std::size_t i = 0; i < kFeatureDim; ++i) {
            if (!(ss >> v.values[i]))
                throw ParseError(path + ":" + std::to_string(lineno) + ": expected 36 features");
        }
        out.push_back(std::move(v));
    }
    return out;
}

}  // namespace caitts::features
