#include "ipad/pipeline.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <nlohmann/json.hpp>

#include "ipad/errors.hpp"
#include "ipad/profile.hpp"
#include "ipad/wav.hpp"

namespace ipad {

namespace {

using nlohmann::json;

void reject_unknown_keys(const json& obj, const std::vector<std::string>& known,
                         const std::string& section) {
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find(known.begin(), known.end(), key) == known.end()) {
            throw ConfigError("unknown config key '" + key + "' in " + section);
        }
    }
}

double get_number(const json& obj, const char* key, double fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_number()) {
        throw ConfigError(std::string("config key '") + key + "' must be a number");
    }
    return obj.at(key).get<double>();
}

std::size_t get_count(const json& obj, const char* key, std::size_t fallback) {
    if (!obj.contains(key)) return fallback;
    const auto& v = obj.at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0) {
        throw ConfigError(std::string("config key '") + key +
                          "' must be a nonnegative integer");
    }
    return v.get<std::size_t>();
}

std::string get_string(const json& obj, const char* key, const std::string& fallback) {
    if (!obj.contains(key)) return fallback;
    if (!obj.at(key).is_string()) {
        throw ConfigError(std::string("config key '") + key + "' must be a string");
    }
    return obj.at(key).get<std::string>();
}

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
    const std::filesystem::path path(p);
    return path.is_absolute() ? path : base / path;
}

// Derives a per-attribute training seed from the global one.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t k) {
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (k + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

std::filesystem::path extractor_dir(const PipelineConfig& cfg) {
    return cfg.paths.model_dir / "encoders";
}

std::filesystem::path detector_path(const PipelineConfig& cfg) {
    return cfg.paths.model_dir / "detector.cls";
}

FilterbankKind filterbank_kind_for(FeatureKind kind) {
    switch (kind) {
        case FeatureKind::lfcc: return FilterbankKind::linear;
        case FeatureKind::mfcc: return FilterbankKind::mel;
        case FeatureKind::imfcc: return FilterbankKind::inverted_mel;
        default: throw ConfigError("external features have no filterbank");
    }
}

std::vector<FeatureMatrix> load_all_features(const Manifest& m,
                                             const std::filesystem::path& feature_dir) {
    std::vector<FeatureMatrix> features;
    features.reserve(m.records.size());
    for (const auto& rec : m.records) {
        const auto path = feature_dir / (rec.utt_id + ".feat");
        if (!std::filesystem::exists(path)) {
            throw ConfigError("missing feature file for utt_id '" + rec.utt_id +
                              "': " + path.string() + " (run the features command first)");
        }
        FeatureMatrix fm = read_features(path);
        fm.utt_id = rec.utt_id;
        features.push_back(std::move(fm));
    }
    return features;
}

std::vector<int> labels_of(const Manifest& m) {
    std::vector<int> labels;
    labels.reserve(m.records.size());
    for (const auto& rec : m.records) labels.push_back(rec.label == Label::genuine ? 1 : 0);
    return labels;
}

} // namespace

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open config file: " + path.string());
    }
    json root;
    try {
        root = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("invalid config file " + path.string() + ": " + e.what());
    }
    if (!root.is_object()) {
        throw ConfigError("config root must be an object: " + path.string());
    }
    reject_unknown_keys(root, {"seed", "features", "attributes", "encoder", "detector", "synthgen",
                               "split", "paths"},
                        "config");

    PipelineConfig cfg;
    const auto base = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    if (root.contains("seed")) {
        if (!root["seed"].is_number_integer() || root["seed"].get<long long>() < 0) {
            throw ConfigError("config key 'seed' must be a nonnegative integer");
        }
        cfg.seed = root["seed"].get<std::uint64_t>();
    }

    if (root.contains("features")) {
        const auto& f = root["features"];
        reject_unknown_keys(
            f, {"kind", "window_ms", "hop_ms", "fft_size", "n_filters", "n_ceps", "fmin", "fmax"},
            "features");
        const std::string kind = get_string(f, "kind", "lfcc");
        if (auto k = parse_feature_kind(kind)) {
            cfg.features.kind = *k;
        } else {
            throw ConfigError("invalid feature kind '" + kind + "'");
        }
        cfg.features.frame.window_ms = static_cast<int>(get_count(f, "window_ms", 50));
        cfg.features.frame.hop_ms = static_cast<int>(get_count(f, "hop_ms", 20));
        cfg.features.frame.fft_size = get_count(f, "fft_size", 1024);
        cfg.features.n_filters = get_count(f, "n_filters", 64);
        cfg.features.n_ceps = get_count(f, "n_ceps", 60);
        cfg.features.fmin = get_number(f, "fmin", 0.0);
        cfg.features.fmax = get_number(f, "fmax", 8000.0);
        if (cfg.features.frame.window_ms <= 0 || cfg.features.frame.hop_ms <= 0 ||
            cfg.features.frame.hop_ms > cfg.features.frame.window_ms) {
            throw ConfigError("features: need 0 < hop_ms <= window_ms");
        }
        if (cfg.features.n_ceps == 0 || cfg.features.n_ceps > cfg.features.n_filters) {
            throw ConfigError("features: need 1 <= n_ceps <= n_filters");
        }
    }

    if (root.contains("attributes")) {
        const auto& a = root["attributes"];
        if (!a.is_array() || a.empty()) {
            throw ConfigError("config key 'attributes' must be a nonempty array");
        }
        cfg.attributes.clear();
        for (const auto& item : a) {
            if (!item.is_string()) {
                throw ConfigError("attribute names must be strings");
            }
            cfg.attributes.push_back(item.get<std::string>());
        }
    }

    if (root.contains("encoder")) {
        const auto& e = root["encoder"];
        reject_unknown_keys(
            e, {"learning_rate", "epochs", "hidden_dim", "output_dim", "self_loop_weight"},
            "encoder");
        cfg.encoder.learning_rate = get_number(e, "learning_rate", cfg.encoder.learning_rate);
        cfg.encoder.epochs = get_count(e, "epochs", cfg.encoder.epochs);
        cfg.encoder.hidden_dim = get_count(e, "hidden_dim", cfg.encoder.hidden_dim);
        cfg.encoder.output_dim = get_count(e, "output_dim", cfg.encoder.output_dim);
        cfg.encoder.self_loop_weight =
            get_number(e, "self_loop_weight", cfg.encoder.self_loop_weight);
        if (!(cfg.encoder.learning_rate > 0.0) || cfg.encoder.epochs == 0 ||
            cfg.encoder.hidden_dim == 0 || cfg.encoder.output_dim == 0 ||
            !(cfg.encoder.self_loop_weight > 0.0)) {
            throw ConfigError("encoder: learning_rate, dims and self_loop_weight must be "
                              "positive, epochs >= 1");
        }
    }

    if (root.contains("detector")) {
        const auto& d = root["detector"];
        reject_unknown_keys(d, {"learning_rate", "epochs", "hidden_width"}, "detector");
        cfg.detector.learning_rate = get_number(d, "learning_rate", cfg.detector.learning_rate);
        cfg.detector.epochs = get_count(d, "epochs", cfg.detector.epochs);
        cfg.detector.hidden_width = get_count(d, "hidden_width", cfg.detector.hidden_width);
        if (!(cfg.detector.learning_rate > 0.0) || cfg.detector.epochs == 0 ||
            cfg.detector.hidden_width == 0) {
            throw ConfigError("detector: learning_rate and hidden_width must be positive, "
                              "epochs >= 1");
        }
    }

    if (root.contains("synthgen")) {
        const auto& s = root["synthgen"];
        reject_unknown_keys(s,
                            {"n_speakers", "utts_per_speaker", "impersonation_fraction",
                             "n_hometowns", "n_jobs", "duration_s", "noise_level"},
                            "synthgen");
        cfg.synthgen.n_speakers = get_count(s, "n_speakers", cfg.synthgen.n_speakers);
        cfg.synthgen.utts_per_speaker =
            get_count(s, "utts_per_speaker", cfg.synthgen.utts_per_speaker);
        cfg.synthgen.impersonation_fraction =
            get_number(s, "impersonation_fraction", cfg.synthgen.impersonation_fraction);
        cfg.synthgen.n_hometowns = get_count(s, "n_hometowns", cfg.synthgen.n_hometowns);
        cfg.synthgen.n_jobs = get_count(s, "n_jobs", cfg.synthgen.n_jobs);
        cfg.synthgen.duration_s = get_number(s, "duration_s", cfg.synthgen.duration_s);
        cfg.synthgen.noise_level = get_number(s, "noise_level", cfg.synthgen.noise_level);
    }

    if (root.contains("split")) {
        const auto& s = root["split"];
        reject_unknown_keys(s, {"ratios", "unseen_scenarios"}, "split");
        if (s.contains("ratios")) {
            const auto& r = s["ratios"];
            if (!r.is_array() || r.size() != 3) {
                throw ConfigError("split.ratios must be an array of three numbers");
            }
            cfg.split.ratios.train = r[0].get<double>();
            cfg.split.ratios.dev = r[1].get<double>();
            cfg.split.ratios.test = r[2].get<double>();
        }
        if (s.contains("unseen_scenarios")) {
            const auto& u = s["unseen_scenarios"];
            if (!u.is_array()) {
                throw ConfigError("split.unseen_scenarios must be an array");
            }
            cfg.split.unseen_scenarios.clear();
            for (const auto& item : u) {
                const auto name = item.get<std::string>();
                if (auto sc = parse_scenario(name)) {
                    cfg.split.unseen_scenarios.insert(*sc);
                } else {
                    throw ConfigError("invalid scenario '" + name + "' in unseen_scenarios");
                }
            }
        }
    }

    if (root.contains("paths")) {
        const auto& p = root["paths"];
        reject_unknown_keys(
            p, {"corpus_dir", "feature_dir", "model_dir", "score_path", "report_path"}, "paths");
        cfg.paths.corpus_dir = resolve(base, get_string(p, "corpus_dir", "corpus"));
        cfg.paths.feature_dir = resolve(base, get_string(p, "feature_dir", "features"));
        cfg.paths.model_dir = resolve(base, get_string(p, "model_dir", "model"));
        cfg.paths.score_path = resolve(base, get_string(p, "score_path", "scores.tsv"));
        cfg.paths.report_path = resolve(base, get_string(p, "report_path", "report.txt"));
    } else {
        cfg.paths.corpus_dir = base / cfg.paths.corpus_dir;
        cfg.paths.feature_dir = base / cfg.paths.feature_dir;
        cfg.paths.model_dir = base / cfg.paths.model_dir;
        cfg.paths.score_path = base / cfg.paths.score_path;
        cfg.paths.report_path = base / cfg.paths.report_path;
    }

    return cfg;
}

std::string attribute_value(const UtteranceRecord& rec, const std::string& attribute) {
    if (attribute == "age_group") return to_string(rec.attributes.age_group);
    if (attribute == "gender") return to_string(rec.attributes.gender);
    if (attribute == "hometown") return rec.attributes.hometown;
    if (attribute == "job") return rec.attributes.job;
    throw ConfigError("unknown attribute '" + attribute +
                      "' (expected age_group, hometown, job, or gender)");
}

Manifest cmd_synthgen(const PipelineConfig& cfg) {
    SynthConfig synth = cfg.synthgen;
    synth.seed = cfg.seed;
    return generate_corpus(synth, cfg.paths.corpus_dir);
}

SplitResult cmd_split(const std::filesystem::path& manifest_path, const SplitRatios& ratios,
                      std::uint64_t seed, const std::set<Scenario>& unseen_scenarios,
                      const std::optional<std::filesystem::path>& out_dir) {
    if (!std::filesystem::exists(manifest_path)) {
        throw ConfigError("manifest not found: " + manifest_path.string());
    }
    const Manifest m = load_manifest(manifest_path);
    SplitResult result = stratified_split(m, ratios, seed, unseen_scenarios);

    std::filesystem::path dir = out_dir.value_or(manifest_path.parent_path());
    if (dir.empty()) dir = ".";
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    save_manifest(result.train, dir / "train.jsonl");
    save_manifest(result.dev, dir / "dev.jsonl");
    save_manifest(result.test, dir / "test.jsonl");
    save_manifest(result.unseen, dir / "unseen.jsonl");
    return result;
}

void cmd_features(const std::filesystem::path& manifest_path, const PipelineConfig& cfg) {
    if (!std::filesystem::exists(manifest_path)) {
        throw ConfigError("manifest not found: " + manifest_path.string());
    }
    const Manifest m = load_manifest(manifest_path);
    const auto base = manifest_path.parent_path();

    if (cfg.features.kind == FeatureKind::external) {
        // Precomputed-feature ingestion: just verify presence and shape.
        std::size_t dim = 0;
        for (const auto& rec : m.records) {
            const auto path = cfg.paths.feature_dir / (rec.utt_id + ".feat");
            if (!std::filesystem::exists(path)) {
                throw ConfigError("missing external feature file for utt_id '" + rec.utt_id +
                                  "': " + path.string());
            }
            const FeatureMatrix fm = read_features(path);
            if (dim == 0) dim = fm.dim();
            if (fm.dim() != dim) {
                throw ConfigError("external feature dim mismatch at '" + rec.utt_id + "'");
            }
        }
        return;
    }

    std::error_code ec;
    std::filesystem::create_directories(cfg.paths.feature_dir, ec);
    if (ec) {
        throw ConfigError("feature directory is not writable: " +
                          cfg.paths.feature_dir.string());
    }
    const Filterbank fb =
        build_filterbank(filterbank_kind_for(cfg.features.kind), cfg.features.n_filters,
                         cfg.features.fmin, cfg.features.fmax, cfg.features.frame.fft_size,
                         kSampleRate);
    for (const auto& rec : m.records) {
        const AudioClip clip = read_wav(base / rec.audio_path, rec.utt_id);
        const FeatureMatrix fm = cepstral_features(clip, cfg.features.frame, fb, cfg.features.n_ceps);
        write_features(fm, cfg.paths.feature_dir / (rec.utt_id + ".feat"));
    }
}

void cmd_train_encoders(const std::filesystem::path& train_manifest_path,
                        const PipelineConfig& cfg) {
    if (cfg.attributes.empty()) {
        throw ConfigError("attribute list is empty; nothing to train");
    }
    if (!std::filesystem::exists(train_manifest_path)) {
        throw ConfigError("manifest not found: " + train_manifest_path.string());
    }
    const Manifest m = load_manifest(train_manifest_path);
    if (m.records.empty()) {
        throw ConfigError("train manifest is empty");
    }
    const auto features = load_all_features(m, cfg.paths.feature_dir);
    std::vector<UtteranceEmbedding> embeddings;
    embeddings.reserve(features.size());
    for (const auto& fm : features) embeddings.push_back(embed_utterance(fm));

    ProfileExtractor extractor;
    for (std::size_t k = 0; k < cfg.attributes.size(); ++k) {
        const std::string& attr = cfg.attributes[k];
        std::vector<std::string> values;
        values.reserve(m.records.size());
        for (const auto& rec : m.records) values.push_back(attribute_value(rec, attr));

        const AttributeGraph graph =
            build_attribute_graph(embeddings, values, cfg.encoder.self_loop_weight);
        EncoderTrainConfig train_cfg = cfg.encoder;
        train_cfg.seed = mix_seed(cfg.seed, k);
        extractor.encoders.push_back(train_attribute_encoder(graph, attr, train_cfg));
    }
    save_extractor(extractor, extractor_dir(cfg));
}

DetectorSummary cmd_train_detector(const std::filesystem::path& train_manifest_path,
                                   const std::filesystem::path& dev_manifest_path,
                                   const PipelineConfig& cfg, bool with_profiles) {
    for (const auto& p : {train_manifest_path, dev_manifest_path}) {
        if (!std::filesystem::exists(p)) {
            throw ConfigError("manifest not found: " + p.string());
        }
    }
    const Manifest train = load_manifest(train_manifest_path);
    const Manifest dev = load_manifest(dev_manifest_path);
    if (train.records.empty() || dev.records.empty()) {
        throw ConfigError("train and dev manifests must be nonempty");
    }

    const auto train_features = load_all_features(train, cfg.paths.feature_dir);
    const auto dev_features = load_all_features(dev, cfg.paths.feature_dir);

    std::vector<ProfileVector> train_profiles;
    std::vector<ProfileVector> dev_profiles;
    std::size_t profile_dim = 0;
    if (with_profiles) {
        const ProfileExtractor extractor = load_extractor(extractor_dir(cfg));
        train_profiles = batch_extract(train.records, cfg.paths.feature_dir, extractor);
        dev_profiles = batch_extract(dev.records, cfg.paths.feature_dir, extractor);
        profile_dim = extractor.output_dim();
    }

    const Matrix train_inputs = pool_inputs(train_features, train_profiles);
    const Matrix dev_inputs = pool_inputs(dev_features, dev_profiles);

    DetectorTrainConfig train_cfg = cfg.detector;
    train_cfg.seed = cfg.seed;
    const DetectorTrainResult result = train_detector(train_inputs, labels_of(train), dev_inputs,
                                                      labels_of(dev), train_cfg);

    DetectorModel model;
    model.feature_dim = train_features[0].dim();
    model.profile_dim = profile_dim;
    model.params = result.params;
    std::error_code ec;
    std::filesystem::create_directories(cfg.paths.model_dir, ec);
    save_detector(model, detector_path(cfg));

    DetectorSummary summary;
    summary.best_epoch = result.best_epoch;
    summary.best_dev_eer = result.dev_eer_trace[result.best_epoch];
    summary.feature_dim = model.feature_dim;
    summary.profile_dim = model.profile_dim;
    return summary;
}

std::vector<DetectionScore> cmd_score(const std::filesystem::path& manifest_path,
                                      const PipelineConfig& cfg) {
    if (!std::filesystem::exists(manifest_path)) {
        throw ConfigError("manifest not found: " + manifest_path.string());
    }
    if (!std::filesystem::exists(detector_path(cfg))) {
        throw ConfigError("detector checkpoint not found (run train-detector first): " +
                          detector_path(cfg).string());
    }
    const Manifest m = load_manifest(manifest_path);
    const DetectorModel model = load_detector(detector_path(cfg));
    std::optional<ProfileExtractor> extractor;
    if (model.profile_dim > 0) {
        extractor = load_extractor(extractor_dir(cfg));
    }
    const auto scores = score_corpus(m, cfg.paths.feature_dir, extractor, model);
    if (cfg.paths.score_path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.paths.score_path.parent_path(), ec);
    }
    write_scores(scores, cfg.paths.score_path);
    return scores;
}

EvalReport cmd_evaluate(const std::filesystem::path& score_path,
                        const std::filesystem::path& manifest_path, const PipelineConfig& cfg,
                        const std::optional<std::filesystem::path>& det_path) {
    for (const auto& p : {score_path, manifest_path}) {
        if (!std::filesystem::exists(p)) {
            throw ConfigError("input not found: " + p.string());
        }
    }
    const Manifest m = load_manifest(manifest_path);
    const auto scores = read_scores(score_path);
    std::map<std::string, double> by_id;
    for (const auto& s : scores) by_id[s.utt_id] = s.score;

    TrialScores trials;
    for (const auto& rec : m.records) {
        const auto it = by_id.find(rec.utt_id);
        if (it == by_id.end()) {
            throw ConfigError("no score for utt_id '" + rec.utt_id + "' in " +
                              score_path.string());
        }
        (rec.label == Label::genuine ? trials.genuine : trials.fake).push_back(it->second);
    }

    const EvalReport report = compute_eer(trials);
    if (cfg.paths.report_path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(cfg.paths.report_path.parent_path(), ec);
    }
    write_report(report, cfg.paths.report_path);
    if (det_path) {
        write_det_points(det_curve(trials), *det_path);
    }
    return report;
}

} // namespace ipad
