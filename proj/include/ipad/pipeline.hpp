#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "ipad/attribute_encoder.hpp"
#include "ipad/detector.hpp"
#include "ipad/features.hpp"
#include "ipad/manifest.hpp"
#include "ipad/metrics.hpp"
#include "ipad/synth.hpp"

namespace ipad {

struct FeatureConfig {
    FeatureKind kind = FeatureKind::lfcc;
    FrameSpec frame;
    std::size_t n_filters = 64;
    std::size_t n_ceps = 60;
    double fmin = 0.0;
    double fmax = 8000.0;
};

struct SplitConfig {
    SplitRatios ratios;
    std::set<Scenario> unseen_scenarios = kDefaultUnseenScenarios;
};

struct PipelinePaths {
    std::filesystem::path corpus_dir = "corpus";
    std::filesystem::path feature_dir = "features";
    std::filesystem::path model_dir = "model";
    std::filesystem::path score_path = "scores.tsv";
    std::filesystem::path report_path = "report.txt";
};

struct PipelineConfig {
    std::uint64_t seed = 0;
    FeatureConfig features;
    std::vector<std::string> attributes = {"age_group", "hometown", "job", "gender"};
    EncoderTrainConfig encoder;
    DetectorTrainConfig detector;
    SynthConfig synthgen;
    SplitConfig split;
    PipelinePaths paths;
};

/// JSON config with one section per concern; unknown keys are rejected and
/// numeric fields are range-checked. Relative paths inside the file are
/// resolved against the file's directory.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);

/// Attribute value token of a record for a configured attribute name
/// (age_group, hometown, job, gender).
std::string attribute_value(const UtteranceRecord& rec, const std::string& attribute);

/// Generates the synthetic corpus under paths.corpus_dir.
Manifest cmd_synthgen(const PipelineConfig& cfg);

/// Splits and writes train/dev/test/unseen manifests into out_dir
/// (defaults to the input manifest's directory).
SplitResult cmd_split(const std::filesystem::path& manifest_path, const SplitRatios& ratios,
                      std::uint64_t seed, const std::set<Scenario>& unseen_scenarios,
                      const std::optional<std::filesystem::path>& out_dir = std::nullopt);

/// Extracts features for every record into paths.feature_dir. With kind
/// "external" the files must already exist and are only checked.
void cmd_features(const std::filesystem::path& manifest_path, const PipelineConfig& cfg);

/// Trains one encoder per configured attribute and saves the extractor
/// bundle under paths.model_dir/encoders.
void cmd_train_encoders(const std::filesystem::path& train_manifest_path,
                        const PipelineConfig& cfg);

struct DetectorSummary {
    std::size_t best_epoch = 0;
    double best_dev_eer = 1.0;
    std::size_t feature_dim = 0;
    std::size_t profile_dim = 0;
};

/// Trains the classifier (with or without profile fusion) and saves the
/// checkpoint at paths.model_dir/detector.cls.
DetectorSummary cmd_train_detector(const std::filesystem::path& train_manifest_path,
                                   const std::filesystem::path& dev_manifest_path,
                                   const PipelineConfig& cfg, bool with_profiles);

/// Scores a manifest with the saved detector; writes paths.score_path.
std::vector<DetectionScore> cmd_score(const std::filesystem::path& manifest_path,
                                      const PipelineConfig& cfg);

/// Joins a score file with manifest labels, computes the EER report, writes
/// paths.report_path (and DET points if det_path is given).
EvalReport cmd_evaluate(const std::filesystem::path& score_path,
                        const std::filesystem::path& manifest_path, const PipelineConfig& cfg,
                        const std::optional<std::filesystem::path>& det_path = std::nullopt);

} // namespace ipad
