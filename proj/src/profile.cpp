#include "ipad/profile.hpp"

#include <fstream>

#include "ipad/errors.hpp"

namespace ipad {

namespace {

void check_extractor(const ProfileExtractor& x) {
    if (x.encoders.empty()) {
        throw ConfigError("profile extractor has no encoders");
    }
    const std::size_t f_in = x.encoders[0].params.input_dim();
    const std::size_t d = x.encoders[0].params.output_dim();
    for (const auto& enc : x.encoders) {
        if (enc.params.input_dim() != f_in || enc.params.output_dim() != d) {
            throw ConfigError("profile extractor encoders disagree on dimensions (attribute '" +
                              enc.attribute + "')");
        }
    }
}

} // namespace

ProfileVector extract_profile(const UtteranceEmbedding& embedding, const ProfileExtractor& x,
                              std::string utt_id) {
    check_extractor(x);
    if (embedding.values.size() != x.input_dim()) {
        throw ConfigError("embedding dim " + std::to_string(embedding.values.size()) +
                          " does not match extractor input dim " +
                          std::to_string(x.input_dim()));
    }
    ProfileVector v;
    v.utt_id = std::move(utt_id);
    v.values.assign(x.output_dim(), 0.0);
    for (const auto& enc : x.encoders) {
        const auto encoded = encode_single(embedding.values, enc.params);
        for (std::size_t i = 0; i < encoded.size(); ++i) v.values[i] += encoded[i];
    }
    const double inv = 1.0 / static_cast<double>(x.encoders.size());
    for (double& val : v.values) val *= inv;
    return v;
}

std::vector<ProfileVector> batch_extract(const std::vector<UtteranceRecord>& records,
                                         const std::filesystem::path& feature_dir,
                                         const ProfileExtractor& x) {
    check_extractor(x);
    std::vector<ProfileVector> out;
    out.reserve(records.size());
    for (const auto& rec : records) {
        const auto path = feature_dir / (rec.utt_id + ".feat");
        if (!std::filesystem::exists(path)) {
            throw ConfigError("missing feature file for utt_id '" + rec.utt_id +
                              "': " + path.string());
        }
        const FeatureMatrix fm = read_features(path);
        out.push_back(extract_profile(embed_utterance(fm), x, rec.utt_id));
    }
    return out;
}

void save_extractor(const ProfileExtractor& x, const std::filesystem::path& dir) {
    check_extractor(x);
    std::filesystem::create_directories(dir);
    std::ofstream index(dir / "encoders.txt", std::ios::binary | std::ios::trunc);
    if (!index) {
        throw IoError("cannot write extractor index: " + (dir / "encoders.txt").string());
    }
    for (const auto& enc : x.encoders) {
        const std::string filename = enc.attribute + ".enc";
        save_encoder(enc, dir / filename);
        index << filename << '\n';
    }
    index.flush();
    if (!index) {
        throw IoError("write failure on extractor index: " + (dir / "encoders.txt").string());
    }
}

ProfileExtractor load_extractor(const std::filesystem::path& dir) {
    const auto index_path = dir / "encoders.txt";
    std::ifstream index(index_path, std::ios::binary);
    if (!index) {
        throw ConfigError("missing extractor index (run train-encoders first): " +
                          index_path.string());
    }
    ProfileExtractor x;
    std::string line;
    while (std::getline(index, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        x.encoders.push_back(load_encoder(dir / line));
    }
    if (x.encoders.empty()) {
        throw FormatError("extractor index lists no encoders: " + index_path.string());
    }
    check_extractor(x);
    return x;
}

} // namespace ipad
