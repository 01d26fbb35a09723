#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "ipad/features.hpp"
#include "ipad/manifest.hpp"
#include "ipad/matrix.hpp"
#include "ipad/profile.hpp"

namespace ipad {

/// Frame-level features with the profile vector replicated on every row;
/// shape t x (f + l). l = 0 is the no-profile ablation.
struct FusedFeature {
    Matrix values;
    std::string utt_id;
};

struct ClassifierParams {
    Matrix u1; // (f + l) x h
    std::vector<double> c1; // h
    std::vector<double> u2; // h
    double c2 = 0.0;

    std::size_t input_dim() const { return u1.rows(); }
    std::size_t hidden_width() const { return u1.cols(); }
};

struct ClassifierGradients {
    Matrix u1;
    std::vector<double> c1;
    std::vector<double> u2;
    double c2 = 0.0;
};

struct DetectorTrainConfig {
    double learning_rate = 1e-2;
    std::size_t epochs = 100;
    std::uint64_t seed = 0;
    std::size_t hidden_width = 64;
    // Label convention throughout: y = 1 for genuine.
};

struct DetectionScore {
    std::string utt_id;
    double score = 0.5; // predicted probability of genuine, in (0, 1)
};

/// Classifier with its fusion dimensions, as stored in a checkpoint.
struct DetectorModel {
    std::size_t feature_dim = 0; // f
    std::size_t profile_dim = 0; // l, 0 = trained without profiles
    ClassifierParams params;
};

FusedFeature fuse(const FeatureMatrix& q, const ProfileVector& v);

/// sigmoid(ReLU(mean_over_rows(k) U1 + c1) . u2 + c2).
DetectionScore classify(const FusedFeature& k, const ClassifierParams& p);

/// Mean clamped binary cross entropy; y = 1 for genuine.
double bce_loss(const std::vector<double>& scores, const std::vector<int>& labels);

/// Mean row of each fused feature, stacked; profiles may be empty (l = 0).
Matrix pool_inputs(const std::vector<FeatureMatrix>& features,
                   const std::vector<ProfileVector>& profiles);

/// Loss over pooled inputs with exact analytic gradients through the
/// classifier; grads may be null to get the loss only.
double detector_loss(const Matrix& pooled_inputs, const std::vector<int>& labels,
                     const ClassifierParams& p, ClassifierGradients* grads);

struct DetectorTrainResult {
    ClassifierParams params; // parameters from the best dev epoch
    std::vector<double> dev_eer_trace; // one entry per epoch
    std::size_t best_epoch = 0; // 0-based; ties resolved to the earliest
};

/// Full-batch gradient descent; after each epoch the dev EER is computed and
/// the best-epoch parameters are kept. Dev must contain both classes.
DetectorTrainResult train_detector(const Matrix& train_inputs, const std::vector<int>& train_labels,
                                   const Matrix& dev_inputs, const std::vector<int>& dev_labels,
                                   const DetectorTrainConfig& config);

/// Scores every record in manifest order, reading <feature_dir>/<utt_id>.feat.
/// Without an extractor the l = 0 path is used; the model's dims must match.
std::vector<DetectionScore> score_corpus(const Manifest& m,
                                         const std::filesystem::path& feature_dir,
                                         const std::optional<ProfileExtractor>& extractor,
                                         const DetectorModel& model);

void save_detector(const DetectorModel& model, const std::filesystem::path& path);
DetectorModel load_detector(const std::filesystem::path& path);

/// Score file: one "utt_id<TAB>score" line per trial, 9 significant digits.
void write_scores(const std::vector<DetectionScore>& scores, const std::filesystem::path& path);
std::vector<DetectionScore> read_scores(const std::filesystem::path& path);

} // namespace ipad
