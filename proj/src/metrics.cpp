#include "ipad/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <string>

#include "ipad/errors.hpp"

namespace ipad {

namespace {

void check_nonempty(const TrialScores& t) {
    if (t.fake.empty()) {
        throw ConfigError("no fake trials; cannot compute error rates");
    }
    if (t.genuine.empty()) {
        throw ConfigError("no genuine trials; cannot compute error rates");
    }
    for (double v : t.genuine) {
        if (!std::isfinite(v)) throw ConfigError("non-finite genuine score");
    }
    for (double v : t.fake) {
        if (!std::isfinite(v)) throw ConfigError("non-finite fake score");
    }
}

std::string format_g9(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

} // namespace

double p_fa(const TrialScores& t, double threshold) {
    if (t.fake.empty()) {
        throw ConfigError("no fake trials; cannot compute p_fa");
    }
    std::size_t over = 0;
    for (double v : t.fake) {
        if (v > threshold) ++over;
    }
    return static_cast<double>(over) / static_cast<double>(t.fake.size());
}

double p_miss(const TrialScores& t, double threshold) {
    if (t.genuine.empty()) {
        throw ConfigError("no genuine trials; cannot compute p_miss");
    }
    std::size_t under = 0;
    for (double v : t.genuine) {
        if (v < threshold) ++under;
    }
    return static_cast<double>(under) / static_cast<double>(t.genuine.size());
}

std::vector<double> candidate_thresholds(const TrialScores& t) {
    check_nonempty(t);
    std::vector<double> pooled;
    pooled.reserve(t.genuine.size() + t.fake.size());
    pooled.insert(pooled.end(), t.genuine.begin(), t.genuine.end());
    pooled.insert(pooled.end(), t.fake.begin(), t.fake.end());
    std::sort(pooled.begin(), pooled.end());
    pooled.erase(std::unique(pooled.begin(), pooled.end()), pooled.end());

    std::vector<double> candidates;
    candidates.reserve(pooled.size() + 1);
    candidates.push_back(pooled.front() - 1.0);
    for (std::size_t i = 0; i + 1 < pooled.size(); ++i) {
        candidates.push_back(0.5 * (pooled[i] + pooled[i + 1]));
    }
    candidates.push_back(pooled.back() + 1.0);
    return candidates;
}

EvalReport compute_eer(const TrialScores& t) {
    const auto candidates = candidate_thresholds(t);
    EvalReport report;
    report.n_genuine = t.genuine.size();
    report.n_fake = t.fake.size();

    double best_gap = std::numeric_limits<double>::infinity();
    for (double theta : candidates) {
        const double fa = p_fa(t, theta);
        const double miss = p_miss(t, theta);
        const double gap = std::abs(fa - miss);
        if (gap < best_gap) {
            best_gap = gap;
            report.threshold = theta;
            report.p_fa = fa;
            report.p_miss = miss;
        }
    }
    report.eer = 0.5 * (report.p_fa + report.p_miss);
    return report;
}

std::vector<DetPoint> det_curve(const TrialScores& t) {
    const auto candidates = candidate_thresholds(t);
    std::vector<DetPoint> points;
    points.reserve(candidates.size());
    for (double theta : candidates) {
        points.push_back({theta, p_fa(t, theta), p_miss(t, theta)});
    }
    return points;
}

void write_report(const EvalReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write report: " + path.string());
    }
    out << "eer: " << format_g9(report.eer) << '\n';
    out << "threshold: " << format_g9(report.threshold) << '\n';
    out << "p_fa: " << format_g9(report.p_fa) << '\n';
    out << "p_miss: " << format_g9(report.p_miss) << '\n';
    out << "n_genuine: " << report.n_genuine << '\n';
    out << "n_fake: " << report.n_fake << '\n';
    out.flush();
    if (!out) {
        throw IoError("write failure on report: " + path.string());
    }
}

void write_det_points(const std::vector<DetPoint>& points, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write DET points: " + path.string());
    }
    for (const auto& p : points) {
        out << format_g9(p.threshold) << '\t' << format_g9(p.p_fa) << '\t' << format_g9(p.p_miss)
            << '\n';
    }
    out.flush();
    if (!out) {
        throw IoError("write failure on DET points: " + path.string());
    }
}

} // namespace ipad
