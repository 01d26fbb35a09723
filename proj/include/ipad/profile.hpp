#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "ipad/attribute_encoder.hpp"
#include "ipad/manifest.hpp"

namespace ipad {

/// One trained encoder per attribute; the profile of an utterance is the
/// arithmetic mean of the per-attribute encodings. Needs no attribute
/// labels at use time.
struct ProfileExtractor {
    std::vector<TrainedAttributeEncoder> encoders;

    std::size_t input_dim() const { return encoders.at(0).params.input_dim(); }
    std::size_t output_dim() const { return encoders.at(0).params.output_dim(); }
};

struct ProfileVector {
    std::vector<double> values;
    std::string utt_id;
};

ProfileVector extract_profile(const UtteranceEmbedding& embedding, const ProfileExtractor& x,
                              std::string utt_id = "");

/// Reads <feature_dir>/<utt_id>.feat for each record, pools it, and extracts
/// the profile. Output order matches the record order; a missing feature
/// file raises ConfigError naming the utt_id.
std::vector<ProfileVector> batch_extract(const std::vector<UtteranceRecord>& records,
                                         const std::filesystem::path& feature_dir,
                                         const ProfileExtractor& x);

/// Bundle layout: <dir>/encoders.txt lists checkpoint filenames in order,
/// one per line, next to the checkpoint files themselves.
void save_extractor(const ProfileExtractor& x, const std::filesystem::path& dir);
ProfileExtractor load_extractor(const std::filesystem::path& dir);

} // namespace ipad
