#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace ipad {

struct TrialScores {
    std::vector<double> genuine;
    std::vector<double> fake;
};

struct EvalReport {
    double eer = 0.0;
    double threshold = 0.0;
    double p_fa = 0.0;
    double p_miss = 0.0;
    std::size_t n_genuine = 0;
    std::size_t n_fake = 0;
};

struct DetPoint {
    double threshold;
    double p_fa;
    double p_miss;
};

/// Fraction of fake trials with score strictly above the threshold.
double p_fa(const TrialScores& t, double threshold);

/// Fraction of genuine trials with score strictly below the threshold.
double p_miss(const TrialScores& t, double threshold);

/// Candidate thresholds: min(all scores) - 1, midpoints between consecutive
/// distinct pooled scores, max(all scores) + 1; ascending.
std::vector<double> candidate_thresholds(const TrialScores& t);

/// Picks the candidate threshold minimizing |p_fa - p_miss| (ties -> the
/// smallest threshold) and reports (p_fa + p_miss) / 2 there as the EER.
EvalReport compute_eer(const TrialScores& t);

/// One point per candidate threshold, ascending.
std::vector<DetPoint> det_curve(const TrialScores& t);

void write_report(const EvalReport& report, const std::filesystem::path& path);
void write_det_points(const std::vector<DetPoint>& points, const std::filesystem::path& path);

} // namespace ipad
