#include "ipad/detector.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>

#include "ipad/errors.hpp"
#include "ipad/metrics.hpp"
#include "ipad/rng.hpp"

namespace ipad {

namespace {

double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

constexpr double kScoreClampLo = 1e-12;
constexpr double kScoreClampHi = 1.0 - 1e-12;

void check_params(const ClassifierParams& p) {
    if (p.c1.size() != p.hidden_width() || p.u2.size() != p.hidden_width()) {
        throw ConfigError("inconsistent classifier parameter shapes");
    }
}

std::vector<double> mean_rows(const Matrix& m) {
    std::vector<double> mean(m.cols(), 0.0);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const double* row = m.row(r);
        for (std::size_t c = 0; c < m.cols(); ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= static_cast<double>(m.rows());
    return mean;
}

double forward_pooled(const double* x, const ClassifierParams& p) {
    const std::size_t in = p.input_dim();
    const std::size_t h = p.hidden_width();
    double out = p.c2;
    for (std::size_t j = 0; j < h; ++j) {
        double acc = p.c1[j];
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * p.u1(i, j);
        if (acc > 0.0) out += acc * p.u2[j];
    }
    return sigmoid(out);
}

} // namespace

FusedFeature fuse(const FeatureMatrix& q, const ProfileVector& v) {
    FusedFeature k;
    k.utt_id = q.utt_id;
    const std::size_t t = q.frames();
    const std::size_t f = q.dim();
    const std::size_t l = v.values.size();
    k.values = Matrix(t, f + l);
    for (std::size_t r = 0; r < t; ++r) {
        double* out = k.values.row(r);
        const double* in = q.values.row(r);
        std::memcpy(out, in, f * sizeof(double));
        std::memcpy(out + f, v.values.data(), l * sizeof(double));
    }
    return k;
}

DetectionScore classify(const FusedFeature& k, const ClassifierParams& p) {
    check_params(p);
    if (k.values.rows() == 0) {
        throw ConfigError("cannot classify an empty fused feature for '" + k.utt_id + "'");
    }
    if (k.values.cols() != p.input_dim()) {
        throw ConfigError("fused feature dim " + std::to_string(k.values.cols()) +
                          " does not match classifier input dim " +
                          std::to_string(p.input_dim()));
    }
    const auto pooled = mean_rows(k.values);
    return {k.utt_id, forward_pooled(pooled.data(), p)};
}

double bce_loss(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty()) {
        throw ConfigError("scores and labels must be nonempty and equally long");
    }
    double loss = 0.0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const double y = labels[i] ? 1.0 : 0.0;
        const double p = std::clamp(scores[i], kScoreClampLo, kScoreClampHi);
        loss -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
    }
    return loss / static_cast<double>(scores.size());
}

Matrix pool_inputs(const std::vector<FeatureMatrix>& features,
                   const std::vector<ProfileVector>& profiles) {
    if (features.empty()) {
        throw ConfigError("no features to pool");
    }
    if (!profiles.empty() && profiles.size() != features.size()) {
        throw ConfigError("profile count does not match feature count");
    }
    const std::size_t f = features[0].dim();
    const std::size_t l = profiles.empty() ? 0 : profiles[0].values.size();
    Matrix pooled(features.size(), f + l);
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i].dim() != f) {
            throw ConfigError("feature dim mismatch at '" + features[i].utt_id + "'");
        }
        if (features[i].frames() == 0) {
            throw ConfigError("empty feature matrix at '" + features[i].utt_id + "'");
        }
        const auto mean = mean_rows(features[i].values);
        std::memcpy(pooled.row(i), mean.data(), f * sizeof(double));
        if (l > 0) {
            if (profiles[i].values.size() != l) {
                throw ConfigError("profile dim mismatch at '" + profiles[i].utt_id + "'");
            }
            std::memcpy(pooled.row(i) + f, profiles[i].values.data(), l * sizeof(double));
        }
    }
    return pooled;
}

double detector_loss(const Matrix& pooled_inputs, const std::vector<int>& labels,
                     const ClassifierParams& p, ClassifierGradients* grads) {
    check_params(p);
    const std::size_t n = pooled_inputs.rows();
    if (n == 0 || labels.size() != n) {
        throw ConfigError("pooled inputs and labels must be nonempty and equally long");
    }
    if (pooled_inputs.cols() != p.input_dim()) {
        throw ConfigError("pooled input dim does not match classifier input dim");
    }
    const std::size_t in = p.input_dim();
    const std::size_t h = p.hidden_width();

    if (grads) {
        grads->u1 = Matrix(in, h);
        grads->c1.assign(h, 0.0);
        grads->u2.assign(h, 0.0);
        grads->c2 = 0.0;
    }

    double loss = 0.0;
    std::vector<double> hidden_pre(h);
    std::vector<double> dhidden(h);
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* x = pooled_inputs.row(i);
        double logit = p.c2;
        for (std::size_t j = 0; j < h; ++j) {
            double acc = p.c1[j];
            for (std::size_t k = 0; k < in; ++k) acc += x[k] * p.u1(k, j);
            hidden_pre[j] = acc;
            if (acc > 0.0) logit += acc * p.u2[j];
        }
        const double raw = sigmoid(logit);
        const double y = labels[i] ? 1.0 : 0.0;
        const double prob = std::clamp(raw, kScoreClampLo, kScoreClampHi);
        loss -= inv_n * (y * std::log(prob) + (1.0 - y) * std::log(1.0 - prob));

        if (!grads) continue;
        // d(loss)/d(logit); zero where the clamp is active so the analytic
        // gradient matches the clamped loss.
        const double dlogit = (raw == prob) ? inv_n * (raw - y) : 0.0;
        grads->c2 += dlogit;
        for (std::size_t j = 0; j < h; ++j) {
            const double act = std::max(hidden_pre[j], 0.0);
            grads->u2[j] += dlogit * act;
            dhidden[j] = hidden_pre[j] > 0.0 ? dlogit * p.u2[j] : 0.0;
            grads->c1[j] += dhidden[j];
        }
        for (std::size_t k = 0; k < in; ++k) {
            const double xv = x[k];
            if (xv == 0.0) continue;
            double* grow = grads->u1.row(k);
            for (std::size_t j = 0; j < h; ++j) grow[j] += xv * dhidden[j];
        }
    }
    return loss;
}

DetectorTrainResult train_detector(const Matrix& train_inputs,
                                   const std::vector<int>& train_labels, const Matrix& dev_inputs,
                                   const std::vector<int>& dev_labels,
                                   const DetectorTrainConfig& config) {
    if (!(config.learning_rate >= 0.0)) {
        throw ConfigError("learning_rate must be nonnegative");
    }
    if (config.epochs == 0) {
        throw ConfigError("epochs must be >= 1");
    }
    if (train_inputs.rows() == 0 || dev_inputs.rows() == 0) {
        throw ConfigError("train and dev sets must be nonempty");
    }
    if (train_inputs.cols() != dev_inputs.cols()) {
        throw ConfigError("train and dev input dims differ");
    }
    const bool dev_has_genuine = std::count(dev_labels.begin(), dev_labels.end(), 1) > 0;
    const bool dev_has_fake = std::count(dev_labels.begin(), dev_labels.end(), 0) > 0;
    if (!dev_has_genuine || !dev_has_fake) {
        throw ConfigError("dev set must contain both genuine and fake trials to compute EER");
    }

    const std::size_t in = train_inputs.cols();
    const std::size_t h = config.hidden_width;

    Rng rng(config.seed);
    ClassifierParams params;
    params.u1 = Matrix(in, h);
    params.c1.assign(h, 0.0);
    params.u2.assign(h, 0.0);
    params.c2 = 0.0;
    const double scale1 = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& v : params.u1.data()) v = rng.normal() * scale1;
    const double scale2 = 1.0 / std::sqrt(static_cast<double>(h));
    for (double& v : params.u2) v = rng.normal() * scale2;

    auto dev_eer = [&](const ClassifierParams& p) {
        TrialScores trials;
        for (std::size_t i = 0; i < dev_inputs.rows(); ++i) {
            const double score = forward_pooled(dev_inputs.row(i), p);
            (dev_labels[i] ? trials.genuine : trials.fake).push_back(score);
        }
        return compute_eer(trials).eer;
    };

    DetectorTrainResult result;
    result.dev_eer_trace.reserve(config.epochs);
    double best = std::numeric_limits<double>::infinity();

    ClassifierGradients grads;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const double loss = detector_loss(train_inputs, train_labels, params, &grads);
        if (!std::isfinite(loss)) {
            std::ostringstream msg;
            msg << "non-finite detector loss (" << loss << ") at epoch " << epoch
                << "; lower the learning rate";
            throw Error(msg.str());
        }
        subtract_scaled(params.u1, config.learning_rate, grads.u1);
        for (std::size_t j = 0; j < h; ++j) {
            params.c1[j] -= config.learning_rate * grads.c1[j];
            params.u2[j] -= config.learning_rate * grads.u2[j];
        }
        params.c2 -= config.learning_rate * grads.c2;

        const double eer = dev_eer(params);
        result.dev_eer_trace.push_back(eer);
        if (eer < best) {
            best = eer;
            result.best_epoch = epoch;
            result.params = params;
        }
    }
    return result;
}

std::vector<DetectionScore> score_corpus(const Manifest& m,
                                         const std::filesystem::path& feature_dir,
                                         const std::optional<ProfileExtractor>& extractor,
                                         const DetectorModel& model) {
    const std::size_t l = extractor ? extractor->output_dim() : 0;
    if (l != model.profile_dim) {
        throw ConfigError("detector was trained with profile dim " +
                          std::to_string(model.profile_dim) + " but scoring uses " +
                          std::to_string(l));
    }
    std::vector<DetectionScore> scores;
    scores.reserve(m.records.size());
    ProfileVector empty_profile;
    for (const auto& rec : m.records) {
        const auto path = feature_dir / (rec.utt_id + ".feat");
        if (!std::filesystem::exists(path)) {
            throw ConfigError("missing feature file for utt_id '" + rec.utt_id +
                              "': " + path.string());
        }
        FeatureMatrix fm = read_features(path);
        fm.utt_id = rec.utt_id;
        if (fm.dim() != model.feature_dim) {
            throw ConfigError("feature dim " + std::to_string(fm.dim()) + " for '" + rec.utt_id +
                              "' does not match detector feature dim " +
                              std::to_string(model.feature_dim));
        }
        const ProfileVector profile =
            extractor ? extract_profile(embed_utterance(fm), *extractor, rec.utt_id)
                      : empty_profile;
        scores.push_back(classify(fuse(fm, profile), model.params));
    }
    return scores;
}

namespace {

constexpr char kDetectorMagic[8] = {'I', 'P', 'A', 'D', 'C', 'L', 'S', '1'};
constexpr std::uint32_t kDetectorVersion = 1;

void put_u32_le(std::ofstream& out, std::uint32_t v) {
    std::uint8_t b[4] = {static_cast<std::uint8_t>(v & 0xff),
                         static_cast<std::uint8_t>((v >> 8) & 0xff),
                         static_cast<std::uint8_t>((v >> 16) & 0xff),
                         static_cast<std::uint8_t>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32_le(std::ifstream& in, const std::filesystem::path& path) {
    std::uint8_t b[4];
    if (!in.read(reinterpret_cast<char*>(b), 4)) {
        throw FormatError("truncated detector checkpoint: " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void save_detector(const DetectorModel& model, const std::filesystem::path& path) {
    check_params(model.params);
    if (model.feature_dim + model.profile_dim != model.params.input_dim()) {
        throw ConfigError("detector dims do not add up to the classifier input dim");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write detector checkpoint: " + path.string());
    }
    static_assert(std::endian::native == std::endian::little);
    out.write(kDetectorMagic, sizeof(kDetectorMagic));
    put_u32_le(out, kDetectorVersion);
    put_u32_le(out, static_cast<std::uint32_t>(model.feature_dim));
    put_u32_le(out, static_cast<std::uint32_t>(model.profile_dim));
    put_u32_le(out, static_cast<std::uint32_t>(model.params.hidden_width()));
    out.write(reinterpret_cast<const char*>(model.params.u1.data().data()),
              static_cast<std::streamsize>(model.params.u1.data().size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.params.c1.data()),
              static_cast<std::streamsize>(model.params.c1.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(model.params.u2.data()),
              static_cast<std::streamsize>(model.params.u2.size() * sizeof(double)));
    out.write(reinterpret_cast<const char*>(&model.params.c2), sizeof(double));
    out.flush();
    if (!out) {
        throw IoError("write failure on detector checkpoint: " + path.string());
    }
}

DetectorModel load_detector(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open detector checkpoint: " + path.string());
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kDetectorMagic, 8) != 0) {
        throw FormatError("bad detector checkpoint magic: " + path.string());
    }
    const std::uint32_t version = get_u32_le(in, path);
    if (version != kDetectorVersion) {
        throw FormatError("unsupported detector checkpoint version " + std::to_string(version) +
                          ": " + path.string());
    }
    DetectorModel model;
    model.feature_dim = get_u32_le(in, path);
    model.profile_dim = get_u32_le(in, path);
    const std::uint32_t h = get_u32_le(in, path);
    const std::size_t input = model.feature_dim + model.profile_dim;
    model.params.u1 = Matrix(input, h);
    model.params.c1.resize(h);
    model.params.u2.resize(h);
    static_assert(std::endian::native == std::endian::little);
    auto read_block = [&](double* data, std::size_t count) {
        if (!in.read(reinterpret_cast<char*>(data),
                     static_cast<std::streamsize>(count * sizeof(double)))) {
            throw FormatError("truncated detector checkpoint: " + path.string());
        }
    };
    read_block(model.params.u1.data().data(), model.params.u1.data().size());
    read_block(model.params.c1.data(), model.params.c1.size());
    read_block(model.params.u2.data(), model.params.u2.size());
    read_block(&model.params.c2, 1);
    return model;
}

void write_scores(const std::vector<DetectionScore>& scores, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write score file: " + path.string());
    }
    char buf[64];
    for (const auto& s : scores) {
        std::snprintf(buf, sizeof(buf), "%.9g", s.score);
        out << s.utt_id << '\t' << buf << '\n';
    }
    out.flush();
    if (!out) {
        throw IoError("write failure on score file: " + path.string());
    }
}

std::vector<DetectionScore> read_scores(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open score file: " + path.string());
    }
    std::vector<DetectionScore> scores;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": expected 'utt_id<TAB>score'");
        }
        DetectionScore s;
        s.utt_id = line.substr(0, tab);
        try {
            s.score = std::stod(line.substr(tab + 1));
        } catch (const std::exception&) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) +
                              ": invalid score value");
        }
        scores.push_back(std::move(s));
    }
    return scores;
}

} // namespace ipad
