#include "caitts/ranker.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "caitts/error.hpp"

namespace caitts::ranker {

namespace {

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

std::vector<double> diff(const std::vector<double>& a, const std::vector<double>& b) {
    std::vector<double> d(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) d[i] = a[i] - b[i];
    return d;
}

// Difference vectors for the two constraint families.
struct PairDiffs {
    std::vector<std::vector<double>> ordered;  // F_higher - F_lower
    std::vector<std::vector<double>> similar;  // F_m - F_h
};

PairDiffs pair_diffs(const ConstraintSets& cs) {
    PairDiffs pd;
    pd.ordered.reserve(cs.ordered.size());
    for (const auto& [hi, lo] : cs.ordered)
        pd.ordered.push_back(diff(cs.feature_bank[hi], cs.feature_bank[lo]));
    pd.similar.reserve(cs.similar.size());
    for (const auto& [m, h] : cs.similar)
        pd.similar.push_back(diff(cs.feature_bank[m], cs.feature_bank[h]));
    return pd;
}

double objective_impl(const PairDiffs& pd, double C, const std::vector<double>& w) {
    double obj = 0.5 * dot(w, w);
    for (const auto& d : pd.ordered) {
        const double viol = std::max(0.0, 1.0 - dot(w, d));
        obj += C * viol * viol;
    }
    for (const auto& d : pd.similar) {
        const double s = dot(w, d);
        obj += C * s * s;
    }
    return obj;
}

std::vector<double> gradient_impl(const PairDiffs& pd, double C, const std::vector<double>& w) {
    std::vector<double> g = w;
    for (const auto& d : pd.ordered) {
        const double viol = 1.0 - dot(w, d);
        if (viol > 0.0)
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= 2.0 * C * viol * d[i];
    }
    for (const auto& d : pd.similar) {
        const double s = dot(w, d);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += 2.0 * C * s * d[i];
    }
    return g;
}

double norm(const std::vector<double>& v) { return std::sqrt(dot(v, v)); }

// Solve H x = b in place by Gaussian elimination with partial pivoting.
std::vector<double> solve_linear(std::vector<std::vector<double>> H, std::vector<double> b) {
    const std::size_t n = b.size();
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(H[r][col]) > std::abs(H[piv][col])) piv = r;
        std::swap(H[col], H[piv]);
        std::swap(b[col], b[piv]);
        const double p = H[col][col];
        if (std::abs(p) < 1e-300) throw SolverDiverged("singular Newton system");
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = H[r][col] / p;
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) H[r][c] -= f * H[col][c];
            b[r] -= f * b[col];
        }
    }
    std::vector<double> x(n, 0.0);
    for (std::size_t ri = n; ri-- > 0;) {
        double acc = b[ri];
        for (std::size_t c = ri + 1; c < n; ++c) acc -= H[ri][c] * x[c];
        x[ri] = acc / H[ri][ri];
    }
    return x;
}

}  // namespace

void ConstraintSets::validate() const {
    const std::size_t n = feature_bank.size();
    for (const auto& [a, b] : ordered)
        if (a >= n || b >= n) throw IndexError("ordered pair index out of range");
    for (const auto& [a, b] : similar)
        if (a >= n || b >= n) throw IndexError("similar pair index out of range");
    for (const auto& f : feature_bank)
        if (f.size() != dim()) throw DimMismatch("ragged feature bank");
}

ConstraintSets build_constraint_sets(const std::vector<features::AccentFeatureVector>& l1,
                                     const std::vector<features::AccentFeatureVector>& l2,
                                     PairingPolicy policy, std::size_t k, std::uint64_t seed) {
    if (l1.empty() || l2.empty()) throw EmptyInput("both L1 and L2 lists must be non-empty");
    (void)policy;  // MatchedUtterance is the only policy

    ConstraintSets cs;
    cs.feature_bank.reserve(l1.size() + l2.size());
    std::unordered_map<std::string, std::size_t> l1_by_utt;
    for (const auto& v : l1) {
        l1_by_utt[v.utterance_id] = cs.feature_bank.size();
        cs.feature_bank.emplace_back(v.values.begin(), v.values.end());
    }
    const std::size_t l2_base = cs.feature_bank.size();
    for (const auto& v : l2) cs.feature_bank.emplace_back(v.values.begin(), v.values.end());

    // matched ordered pairs: L2 higher, same-utterance L1 lower
    for (std::size_t i = 0; i < l2.size(); ++i) {
        const auto it = l1_by_utt.find(l2[i].utterance_id);
        if (it == l1_by_utt.end())
            throw UnpairedUtterance("no L1 match for " + l2[i].utterance_id);
        cs.ordered.emplace_back(l2_base + i, it->second);
    }

    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> pick_l1(0, l1.size() - 1);
    std::uniform_int_distribution<std::size_t> pick_l2(0, l2.size() - 1);
    for (std::size_t i = 0; i < k; ++i)
        cs.ordered.emplace_back(l2_base + pick_l2(rng), pick_l1(rng));
    for (std::size_t i = 0; i < k; ++i)
        cs.similar.emplace_back(pick_l1(rng), pick_l1(rng));
    // L2-L2 similar pairs are drawn within one accent category: utterances of
    // different accents may carry very different intensities, and tying their
    // scores together suppresses the intensity ordering the ranker should learn.
    for (std::size_t i = 0; i < k; ++i) {
        const std::size_t a = pick_l2(rng);
        std::size_t b = pick_l2(rng);
        for (int guard = 0; l2[b].accent_id != l2[a].accent_id && guard < 200; ++guard)
            b = pick_l2(rng);
        cs.similar.emplace_back(l2_base + a, l2_base + b);
    }

    cs.validate();
    return cs;
}

double rank_objective(const ConstraintSets& cs, double C, const std::vector<double>& w) {
    return objective_impl(pair_diffs(cs), C, w);
}

RankModel train_rank_svm(const ConstraintSets& cs, double C) {
    if (C <= 0.0) throw ConfigError("C must be positive");
    if (cs.ordered.empty()) throw EmptyInput("need at least one ordered pair");
    cs.validate();

    const std::size_t dim = cs.dim();
    const PairDiffs pd = pair_diffs(cs);
    std::vector<double> w(dim, 0.0);

    constexpr std::size_t kMaxIter = 100;
    constexpr double kGradTol = 1e-6;
    std::size_t iter = 0;
    for (; iter < kMaxIter; ++iter) {
        const std::vector<double> g = gradient_impl(pd, C, w);
        if (norm(g) < kGradTol) break;

        // Hessian on the current active set
        std::vector<std::vector<double>> H(dim, std::vector<double>(dim, 0.0));
        for (std::size_t i = 0; i < dim; ++i) H[i][i] = 1.0;
        for (const auto& d : pd.ordered) {
            if (1.0 - dot(w, d) <= 0.0) continue;
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) H[i][j] += 2.0 * C * d[i] * d[j];
        }
        for (const auto& d : pd.similar)
            for (std::size_t i = 0; i < dim; ++i)
                for (std::size_t j = 0; j < dim; ++j) H[i][j] += 2.0 * C * d[i] * d[j];

        std::vector<double> neg_g(dim);
        for (std::size_t i = 0; i < dim; ++i) neg_g[i] = -g[i];
        const std::vector<double> step = solve_linear(std::move(H), std::move(neg_g));

        // backtracking line search; the active set may shrink across the step
        const double obj0 = objective_impl(pd, C, w);
        double t = 1.0;
        bool accepted = false;
        for (int bt = 0; bt < 60; ++bt) {
            std::vector<double> cand(dim);
            for (std::size_t i = 0; i < dim; ++i) cand[i] = w[i] + t * step[i];
            if (objective_impl(pd, C, cand) < obj0) {
                w = std::move(cand);
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        if (!accepted) break;  // at numerical floor; gradient check below decides
    }

    const std::vector<double> g = gradient_impl(pd, C, w);
    if (norm(g) >= kGradTol) {
        std::ostringstream msg;
        msg << "no convergence after " << iter << " iterations; objective "
            << objective_impl(pd, C, w) << ", gradient norm " << norm(g);
        throw SolverDiverged(msg.str());
    }

    RankModel m;
    m.w = std::move(w);
    m.C = C;
    m.solver_iterations = iter;
    return m;
}

RankModel qp_oracle(const ConstraintSets& cs, double C) {
    cs.validate();
    const std::size_t dim = cs.dim();
    if (dim > 8) throw OracleTooLarge("oracle capped at 8 dimensions");
    if (cs.ordered.size() + cs.similar.size() > 20)
        throw OracleTooLarge("oracle capped at 20 pairs");

    // Coordinate descent with exact 1-D minimization by bisection on the
    // (monotone) directional derivative of the convex objective.
    std::vector<std::vector<double>> ord, sim;
    for (const auto& [hi, lo] : cs.ordered) {
        std::vector<double> d(dim);
        for (std::size_t i = 0; i < dim; ++i) d[i] = cs.feature_bank[hi][i] - cs.feature_bank[lo][i];
        ord.push_back(std::move(d));
    }
    for (const auto& [m, h] : cs.similar) {
        std::vector<double> d(dim);
        for (std::size_t i = 0; i < dim; ++i) d[i] = cs.feature_bank[m][i] - cs.feature_bank[h][i];
        sim.push_back(std::move(d));
    }

    std::vector<double> w(dim, 0.0);
    auto partial = [&](std::size_t j, double wj) {
        // d/dwj of the objective with coordinate j set to wj
        double save = w[j];
        w[j] = wj;
        double g = w[j];
        for (const auto& d : ord) {
            double m = 0.0;
            for (std::size_t i = 0; i < dim; ++i) m += w[i] * d[i];
            if (1.0 - m > 0.0) g += -2.0 * C * (1.0 - m) * d[j];
        }
        for (const auto& d : sim) {
            double m = 0.0;
            for (std::size_t i = 0; i < dim; ++i) m += w[i] * d[i];
            g += 2.0 * C * m * d[j];
        }
        w[j] = save;
        return g;
    };

    for (std::size_t sweep = 0; sweep < 100000; ++sweep) {
        double gnorm2 = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
            // bracket the root of the monotone derivative
            double lo = -1.0, hi = 1.0;
            while (partial(j, lo) > 0.0) lo *= 2.0;
            while (partial(j, hi) < 0.0) hi *= 2.0;
            for (int it = 0; it < 200; ++it) {
                const double mid = 0.5 * (lo + hi);
                (partial(j, mid) > 0.0 ? hi : lo) = mid;
            }
            w[j] = 0.5 * (lo + hi);
        }
        for (std::size_t j = 0; j < dim; ++j) {
            const double g = partial(j, w[j]);
            gnorm2 += g * g;
        }
        if (std::sqrt(gnorm2) < 1e-8) break;
    }

    RankModel m;
    m.w = std::move(w);
    m.C = C;
    return m;
}

double score(const RankModel& m, const std::vector<double>& f) {
    if (m.w.size() != f.size()) throw DimMismatch("weight/feature dimension mismatch");
    return dot(m.w, f);
}

double score(const RankModel& m, const features::AccentFeatureVector& f) {
    return score(m, std::vector<double>(f.values.begin(), f.values.end()));
}

std::pair<std::vector<double>, std::pair<double, double>> normalize_intensities(
    const std::vector<double>& scores) {
    if (scores.empty()) throw EmptyInput("normalize_intensities on empty sequence");
    const auto [mn_it, mx_it] = std::minmax_element(scores.begin(), scores.end());
    const double mn = *mn_it, mx = *mx_it;
    std::vector<double> out(scores.size());
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double v = (mx > mn) ? (scores[i] - mn) / (mx - mn) : 0.5;
        out[i] = std::clamp(v, 1e-3, 1.0 - 1e-3);
    }
    return {out, {mn, mx}};
}

double normalize_score(const RankModel& m, double raw) {
    const double v = (m.score_max > m.score_min)
                         ? (raw - m.score_min) / (m.score_max - m.score_min)
                         : 0.5;
    return std::clamp(v, 1e-3, 1.0 - 1e-3);
}

std::string RankModel::to_json() const {
    nlohmann::json j;
    j["accent_id"] = accent_id;
    j["C"] = C;
    j["w"] = w;
    j["score_min"] = score_min;
    j["score_max"] = score_max;
    j["solver_iterations"] = solver_iterations;
    return j.dump(2);
}

RankModel RankModel::from_json(const std::string& text) {
    const nlohmann::json j = nlohmann::json::parse(text);
    RankModel m;
    m.accent_id = j.at("accent_id").get<int>();
    m.C = j.at("C").get<double>();
    m.w = j.at("w").get<std::vector<double>>();
    m.score_min = j.at("score_min").get<double>();
    m.score_max = j.at("score_max").get<double>();
    m.solver_iterations = j.at("solver_iterations").get<std::size_t>();
    return m;
}

void RankModel::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw MissingAsset("cannot write " + path);
    out << to_json() << "\n";
}

RankModel RankModel::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw MissingAsset("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

}  // namespace caitts::ranker
