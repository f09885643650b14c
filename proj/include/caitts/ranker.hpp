#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "caitts/accent_features.hpp"

namespace caitts::ranker {

// Ordered pairs are (higher, lower) indices into the feature bank; similar
// pairs are unordered same-domain indices.
struct ConstraintSets {
    std::vector<std::pair<std::size_t, std::size_t>> ordered;
    std::vector<std::pair<std::size_t, std::size_t>> similar;
    std::vector<std::vector<double>> feature_bank;

    std::size_t dim() const { return feature_bank.empty() ? 0 : feature_bank.front().size(); }
    void validate() const;
};

struct RankModel {
    std::vector<double> w;
    double C = 1.0;
    double score_min = 0.0;
    double score_max = 1.0;
    int accent_id = 0;
    std::size_t solver_iterations = 0;

    std::string to_json() const;
    static RankModel from_json(const std::string& text);
    void save(const std::string& path) const;
    static RankModel load(const std::string& path);
};

enum class PairingPolicy { MatchedUtterance };

// Matched same-utterance ordered pairs (L2 higher, L1 lower), plus
// k random cross ordered pairs and k random same-domain similar pairs from
// each of L1 and L2.
ConstraintSets build_constraint_sets(const std::vector<features::AccentFeatureVector>& l1,
                                     const std::vector<features::AccentFeatureVector>& l2,
                                     PairingPolicy policy, std::size_t k, std::uint64_t seed);

// Objective: 1/2 |w|^2 + C sum_O max(0, 1 - w.d_o)^2 + C sum_S (w.d_s)^2
// with d_o = F_higher - F_lower, d_s = F_m - F_h.
double rank_objective(const ConstraintSets& cs, double C, const std::vector<double>& w);

// Damped Newton on the L2-slack primal; converges to gradient norm < 1e-6.
RankModel train_rank_svm(const ConstraintSets& cs, double C);

// Independent coordinate-descent minimizer for tiny instances (dim <= 8,
// <= 20 pairs); shares no solver code with train_rank_svm.
RankModel qp_oracle(const ConstraintSets& cs, double C);

double score(const RankModel& m, const features::AccentFeatureVector& f);
double score(const RankModel& m, const std::vector<double>& f);

// Min-max to (0,1), clamped to [1e-3, 1-1e-3]; constant input maps to 0.5.
std::pair<std::vector<double>, std::pair<double, double>> normalize_intensities(
    const std::vector<double>& scores);

// Normalize one score against stored bounds, same clamping.
double normalize_score(const RankModel& m, double raw);

}  // namespace caitts::ranker
