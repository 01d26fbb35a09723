#include "ipad/attribute_encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ipad/errors.hpp"
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

constexpr double kProbabilityFloor = 1e-12;

// E(X) = ReLU(X W1 + b1) W2 + b2, keeping the hidden pre-activation around
// for the backward pass.
struct EncoderForward {
    Matrix hidden_pre; // N x d_h, before ReLU
    Matrix encoded; // N x d
};

EncoderForward encoder_forward(const Matrix& x, const EncoderParams& p) {
    EncoderForward fwd;
    fwd.hidden_pre = matmul(x, p.w1);
    for (std::size_t i = 0; i < fwd.hidden_pre.rows(); ++i) {
        double* row = fwd.hidden_pre.row(i);
        for (std::size_t j = 0; j < fwd.hidden_pre.cols(); ++j) row[j] += p.b1[j];
    }
    Matrix hidden = fwd.hidden_pre;
    for (double& v : hidden.data()) v = std::max(v, 0.0);
    fwd.encoded = matmul(hidden, p.w2);
    for (std::size_t i = 0; i < fwd.encoded.rows(); ++i) {
        double* row = fwd.encoded.row(i);
        for (std::size_t j = 0; j < fwd.encoded.cols(); ++j) row[j] += p.b2[j];
    }
    return fwd;
}

// Applies the symmetric normalized adjacency blockwise: block rows become
// (block_sum + (w-1) z_i) / (m-1+w); isolated rows pass through.
Matrix apply_normalized_adjacency(const AttributeGraph& g, const Matrix& z) {
    const double w = g.self_loop_weight;
    Matrix out = z;
    for (const auto& [value, block] : g.partition) {
        (void)value;
        const std::size_t m = block.size();
        if (m <= 1) continue; // single-node block behaves like an isolated node
        std::vector<double> sum(z.cols(), 0.0);
        for (std::size_t idx : block) {
            const double* row = z.row(idx);
            for (std::size_t c = 0; c < z.cols(); ++c) sum[c] += row[c];
        }
        const double denom = static_cast<double>(m - 1) + w;
        for (std::size_t idx : block) {
            const double* zrow = z.row(idx);
            double* orow = out.row(idx);
            for (std::size_t c = 0; c < z.cols(); ++c) {
                orow[c] = (sum[c] + (w - 1.0) * zrow[c]) / denom;
            }
        }
    }
    return out;
}

void check_graph(const AttributeGraph& g) {
    if (g.num_nodes() == 0) {
        throw ConfigError("attribute graph has no nodes");
    }
    if (!(g.self_loop_weight > 0.0)) {
        throw ConfigError("self_loop_weight must be positive");
    }
    std::vector<bool> seen(g.num_nodes(), false);
    for (const auto& [value, block] : g.partition) {
        for (std::size_t idx : block) {
            if (idx >= g.num_nodes()) {
                throw ConfigError("partition block '" + value + "' references node " +
                                  std::to_string(idx) + " out of range");
            }
            if (seen[idx]) {
                throw ConfigError("partition blocks overlap at node " + std::to_string(idx));
            }
            seen[idx] = true;
        }
    }
}

void check_shapes(const AttributeGraph& g, const EncoderParams& p) {
    if (p.input_dim() != g.feature_dim()) {
        throw ConfigError("encoder input dim " + std::to_string(p.input_dim()) +
                          " does not match graph feature dim " +
                          std::to_string(g.feature_dim()));
    }
    if (p.b1.size() != p.hidden_dim() || p.w2.rows() != p.hidden_dim() ||
        p.b2.size() != p.output_dim() || p.scoring.rows() != p.output_dim() ||
        p.scoring.cols() != p.output_dim()) {
        throw ConfigError("inconsistent encoder parameter shapes");
    }
}

} // namespace

AttributeGraph build_attribute_graph(const std::vector<UtteranceEmbedding>& embeddings,
                                     const std::vector<std::string>& values,
                                     double self_loop_weight) {
    if (embeddings.size() != values.size()) {
        throw ConfigError("embedding count " + std::to_string(embeddings.size()) +
                          " does not match value count " + std::to_string(values.size()));
    }
    if (embeddings.empty()) {
        throw ConfigError("attribute graph needs at least one node");
    }
    const std::size_t f_in = embeddings[0].values.size();
    AttributeGraph g;
    g.self_loop_weight = self_loop_weight;
    g.node_features = Matrix(embeddings.size(), f_in);
    for (std::size_t i = 0; i < embeddings.size(); ++i) {
        if (embeddings[i].values.size() != f_in) {
            throw ConfigError("embedding " + std::to_string(i) + " has dim " +
                              std::to_string(embeddings[i].values.size()) + ", expected " +
                              std::to_string(f_in));
        }
        std::copy(embeddings[i].values.begin(), embeddings[i].values.end(),
                  g.node_features.row(i));
        if (values[i] != "unknown") {
            g.partition[values[i]].push_back(i);
        }
    }
    return g;
}

Matrix propagate(const AttributeGraph& g, const EncoderParams& p) {
    check_graph(g);
    check_shapes(g, p);
    const EncoderForward fwd = encoder_forward(g.node_features, p);
    Matrix h = apply_normalized_adjacency(g, fwd.encoded);
    for (double& v : h.data()) v = std::max(v, 0.0);
    return h;
}

std::vector<double> readout(const Matrix& h) {
    if (h.rows() == 0) {
        throw ConfigError("readout needs at least one node representation");
    }
    std::vector<double> s(h.cols(), 0.0);
    for (std::size_t i = 0; i < h.rows(); ++i) {
        const double* row = h.row(i);
        for (std::size_t c = 0; c < h.cols(); ++c) s[c] += row[c];
    }
    for (double& v : s) v = sigmoid(v / static_cast<double>(h.rows()));
    return s;
}

NodeRepresentations encode_graph(const AttributeGraph& g, const EncoderParams& p) {
    NodeRepresentations rep;
    rep.local = propagate(g, p);
    rep.summary = readout(rep.local);
    return rep;
}

std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    return rng.permutation(n);
}

Matrix corrupt(const Matrix& x, std::uint64_t seed) {
    const auto perm = corruption_permutation(x.rows(), seed);
    Matrix out(x.rows(), x.cols());
    for (std::size_t i = 0; i < x.rows(); ++i) {
        std::memcpy(out.row(i), x.row(perm[i]), x.cols() * sizeof(double));
    }
    return out;
}

double discriminate(std::span<const double> h, std::span<const double> s, const Matrix& scoring) {
    if (h.size() != scoring.rows() || s.size() != scoring.cols()) {
        throw ConfigError("discriminator shape mismatch");
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < h.size(); ++i) {
        const double* mrow = scoring.row(i);
        double dot = 0.0;
        for (std::size_t j = 0; j < s.size(); ++j) dot += mrow[j] * s[j];
        acc += h[i] * dot;
    }
    return sigmoid(acc);
}

EncoderLoss infomax_loss(const AttributeGraph& g, const EncoderParams& p, std::uint64_t seed) {
    return infomax_loss(g, p, corruption_permutation(g.num_nodes(), seed));
}

EncoderLoss infomax_loss(const AttributeGraph& g, const EncoderParams& p,
                         const std::vector<std::size_t>& permutation) {
    check_graph(g);
    check_shapes(g, p);
    const std::size_t n = g.num_nodes();
    const std::size_t d = p.output_dim();
    if (permutation.size() != n) {
        throw ConfigError("corruption permutation has wrong length");
    }

    // Positive branch.
    const EncoderForward pos = encoder_forward(g.node_features, p);
    const Matrix pos_pre = apply_normalized_adjacency(g, pos.encoded); // B
    Matrix h = pos_pre;
    for (double& v : h.data()) v = std::max(v, 0.0);

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = h.row(i);
        for (std::size_t c = 0; c < d; ++c) mean[c] += row[c];
    }
    for (double& v : mean) v /= static_cast<double>(n);
    std::vector<double> s(d);
    for (std::size_t c = 0; c < d; ++c) s[c] = sigmoid(mean[c]);

    // Negative branch: shuffled rows, same adjacency.
    Matrix corrupted(n, g.feature_dim());
    for (std::size_t i = 0; i < n; ++i) {
        std::memcpy(corrupted.row(i), g.node_features.row(permutation[i]),
                    g.feature_dim() * sizeof(double));
    }
    const EncoderForward neg = encoder_forward(corrupted, p);
    const Matrix neg_pre = apply_normalized_adjacency(g, neg.encoded);
    Matrix hc = neg_pre;
    for (double& v : hc.data()) v = std::max(v, 0.0);

    // Scores through the bilinear discriminator. r = M s is shared.
    std::vector<double> r(d, 0.0);
    for (std::size_t i = 0; i < d; ++i) {
        const double* mrow = p.scoring.row(i);
        for (std::size_t j = 0; j < d; ++j) r[i] += mrow[j] * s[j];
    }

    const double inv_2n = 1.0 / (2.0 * static_cast<double>(n));
    double loss = 0.0;
    // d(loss)/d(logit); zeroed where the probability clamp is active so the
    // analytic gradient matches the clamped loss exactly.
    std::vector<double> g_pos(n), g_neg(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double* hrow = h.row(i);
        double logit = 0.0;
        for (std::size_t c = 0; c < d; ++c) logit += hrow[c] * r[c];
        const double prob = sigmoid(logit);
        loss -= inv_2n * std::log(std::max(prob, kProbabilityFloor));
        g_pos[i] = prob <= kProbabilityFloor ? 0.0 : -inv_2n * (1.0 - prob);
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double* hrow = hc.row(j);
        double logit = 0.0;
        for (std::size_t c = 0; c < d; ++c) logit += hrow[c] * r[c];
        const double prob = sigmoid(logit);
        loss -= inv_2n * std::log(std::max(1.0 - prob, kProbabilityFloor));
        g_neg[j] = (1.0 - prob) <= kProbabilityFloor ? 0.0 : inv_2n * prob;
    }

    // Backward pass.
    EncoderLoss result;
    result.loss = loss;
    EncoderGradients& grads = result.grads;
    grads.w1 = Matrix(p.w1.rows(), p.w1.cols());
    grads.b1.assign(p.b1.size(), 0.0);
    grads.w2 = Matrix(p.w2.rows(), p.w2.cols());
    grads.b2.assign(p.b2.size(), 0.0);
    grads.scoring = Matrix(d, d);

    // dM = (H^T g_pos + Hc^T g_neg) s^T; ds accumulates M^T of the same vector.
    std::vector<double> u(d, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* hrow = h.row(i);
        for (std::size_t c = 0; c < d; ++c) u[c] += g_pos[i] * hrow[c];
    }
    for (std::size_t j = 0; j < n; ++j) {
        const double* hrow = hc.row(j);
        for (std::size_t c = 0; c < d; ++c) u[c] += g_neg[j] * hrow[c];
    }
    for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) grads.scoring(i, j) = u[i] * s[j];
    }
    std::vector<double> ds(d, 0.0);
    for (std::size_t j = 0; j < d; ++j) {
        for (std::size_t i = 0; i < d; ++i) ds[j] += p.scoring(i, j) * u[i];
    }

    // Through the readout: dm = ds * s(1-s), spread evenly over rows of H.
    std::vector<double> dmean(d);
    for (std::size_t c = 0; c < d; ++c) dmean[c] = ds[c] * s[c] * (1.0 - s[c]);

    Matrix dh(n, d);
    for (std::size_t i = 0; i < n; ++i) {
        double* drow = dh.row(i);
        for (std::size_t c = 0; c < d; ++c) {
            drow[c] = g_pos[i] * r[c] + dmean[c] / static_cast<double>(n);
        }
    }
    Matrix dhc(n, d);
    for (std::size_t j = 0; j < n; ++j) {
        double* drow = dhc.row(j);
        for (std::size_t c = 0; c < d; ++c) drow[c] = g_neg[j] * r[c];
    }

    // Through the outer ReLU and the (symmetric) normalized adjacency.
    for (std::size_t i = 0; i < dh.data().size(); ++i) {
        if (pos_pre.data()[i] <= 0.0) dh.data()[i] = 0.0;
    }
    for (std::size_t i = 0; i < dhc.data().size(); ++i) {
        if (neg_pre.data()[i] <= 0.0) dhc.data()[i] = 0.0;
    }
    Matrix dz = apply_normalized_adjacency(g, dh);
    Matrix dzc = apply_normalized_adjacency(g, dhc);

    // Through E for each branch.
    auto backprop_encoder = [&](const Matrix& x, const EncoderForward& fwd, const Matrix& dz_in) {
        Matrix hidden = fwd.hidden_pre;
        for (double& v : hidden.data()) v = std::max(v, 0.0);

        add_in_place(grads.w2, matmul(transpose(hidden), dz_in));
        for (std::size_t i = 0; i < dz_in.rows(); ++i) {
            const double* row = dz_in.row(i);
            for (std::size_t c = 0; c < dz_in.cols(); ++c) grads.b2[c] += row[c];
        }

        Matrix dhidden = matmul(dz_in, transpose(p.w2));
        for (std::size_t i = 0; i < dhidden.data().size(); ++i) {
            if (fwd.hidden_pre.data()[i] <= 0.0) dhidden.data()[i] = 0.0;
        }

        add_in_place(grads.w1, matmul(transpose(x), dhidden));
        for (std::size_t i = 0; i < dhidden.rows(); ++i) {
            const double* row = dhidden.row(i);
            for (std::size_t c = 0; c < dhidden.cols(); ++c) grads.b1[c] += row[c];
        }
    };
    backprop_encoder(g.node_features, pos, dz);
    backprop_encoder(corrupted, neg, dzc);

    return result;
}

TrainedAttributeEncoder train_attribute_encoder(const AttributeGraph& g,
                                                const std::string& attribute,
                                                const EncoderTrainConfig& config) {
    check_graph(g);
    if (!(config.learning_rate >= 0.0)) {
        throw ConfigError("learning_rate must be nonnegative");
    }
    if (config.epochs == 0) {
        throw ConfigError("epochs must be >= 1");
    }

    Rng rng(config.seed);
    const std::size_t f_in = g.feature_dim();
    const std::size_t d_h = config.hidden_dim;
    const std::size_t d = config.output_dim;

    TrainedAttributeEncoder enc;
    enc.attribute = attribute;
    enc.self_loop_weight = g.self_loop_weight;
    enc.params.w1 = Matrix(f_in, d_h);
    enc.params.b1.assign(d_h, 0.0);
    enc.params.w2 = Matrix(d_h, d);
    enc.params.b2.assign(d, 0.0);
    enc.params.scoring = Matrix(d, d);
    const double scale1 = 1.0 / std::sqrt(static_cast<double>(f_in));
    for (double& v : enc.params.w1.data()) v = rng.normal() * scale1;
    const double scale2 = 1.0 / std::sqrt(static_cast<double>(d_h));
    for (double& v : enc.params.w2.data()) v = rng.normal() * scale2;
    const double scale_m = 1.0 / std::sqrt(static_cast<double>(d));
    for (double& v : enc.params.scoring.data()) v = rng.normal() * scale_m;

    enc.loss_trace.reserve(config.epochs);
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        const auto perm = rng.permutation(g.num_nodes());
        EncoderLoss step = infomax_loss(g, enc.params, perm);
        if (!std::isfinite(step.loss)) {
            std::ostringstream msg;
            msg << "non-finite loss (" << step.loss << ") at epoch " << epoch << " for attribute '"
                << attribute << "'; lower the learning rate";
            throw Error(msg.str());
        }
        enc.loss_trace.push_back(step.loss);

        subtract_scaled(enc.params.w1, config.learning_rate, step.grads.w1);
        subtract_scaled(enc.params.w2, config.learning_rate, step.grads.w2);
        subtract_scaled(enc.params.scoring, config.learning_rate, step.grads.scoring);
        for (std::size_t i = 0; i < enc.params.b1.size(); ++i) {
            enc.params.b1[i] -= config.learning_rate * step.grads.b1[i];
        }
        for (std::size_t i = 0; i < enc.params.b2.size(); ++i) {
            enc.params.b2[i] -= config.learning_rate * step.grads.b2[i];
        }
    }
    return enc;
}

std::vector<double> encode_single(std::span<const double> x, const EncoderParams& p) {
    if (x.size() != p.input_dim()) {
        throw ConfigError("encode_single input dim " + std::to_string(x.size()) +
                          " does not match encoder input dim " + std::to_string(p.input_dim()));
    }
    const std::size_t d_h = p.hidden_dim();
    const std::size_t d = p.output_dim();
    std::vector<double> hidden(d_h);
    for (std::size_t j = 0; j < d_h; ++j) {
        double acc = p.b1[j];
        for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * p.w1(i, j);
        hidden[j] = std::max(acc, 0.0);
    }
    std::vector<double> out(d);
    for (std::size_t j = 0; j < d; ++j) {
        double acc = p.b2[j];
        for (std::size_t i = 0; i < d_h; ++i) acc += hidden[i] * p.w2(i, j);
        out[j] = std::max(acc, 0.0);
    }
    return out;
}

namespace {

constexpr char kEncoderMagic[8] = {'I', 'P', 'A', 'D', 'E', 'N', 'C', '1'};

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
        throw FormatError("truncated encoder checkpoint: " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_doubles(std::ofstream& out, const double* data, std::size_t count) {
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(data),
              static_cast<std::streamsize>(count * sizeof(double)));
}

void read_doubles(std::ifstream& in, double* data, std::size_t count,
                  const std::filesystem::path& path) {
    static_assert(std::endian::native == std::endian::little);
    if (!in.read(reinterpret_cast<char*>(data),
                 static_cast<std::streamsize>(count * sizeof(double)))) {
        throw FormatError("truncated encoder checkpoint: " + path.string());
    }
}

} // namespace

void save_encoder(const TrainedAttributeEncoder& enc, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write encoder checkpoint: " + path.string());
    }
    out.write(kEncoderMagic, sizeof(kEncoderMagic));
    put_u32_le(out, static_cast<std::uint32_t>(enc.attribute.size()));
    out.write(enc.attribute.data(), static_cast<std::streamsize>(enc.attribute.size()));
    write_doubles(out, &enc.self_loop_weight, 1);
    put_u32_le(out, static_cast<std::uint32_t>(enc.params.input_dim()));
    put_u32_le(out, static_cast<std::uint32_t>(enc.params.hidden_dim()));
    put_u32_le(out, static_cast<std::uint32_t>(enc.params.output_dim()));
    write_doubles(out, enc.params.w1.data().data(), enc.params.w1.data().size());
    write_doubles(out, enc.params.b1.data(), enc.params.b1.size());
    write_doubles(out, enc.params.w2.data().data(), enc.params.w2.data().size());
    write_doubles(out, enc.params.b2.data(), enc.params.b2.size());
    write_doubles(out, enc.params.scoring.data().data(), enc.params.scoring.data().size());
    out.flush();
    if (!out) {
        throw IoError("write failure on encoder checkpoint: " + path.string());
    }
}

TrainedAttributeEncoder load_encoder(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open encoder checkpoint: " + path.string());
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kEncoderMagic, 7) != 0) {
        throw FormatError("bad encoder checkpoint magic: " + path.string());
    }
    if (magic[7] != kEncoderMagic[7]) {
        throw FormatError(std::string("unsupported encoder checkpoint version '") + magic[7] +
                          "': " + path.string());
    }

    TrainedAttributeEncoder enc;
    const std::uint32_t name_len = get_u32_le(in, path);
    enc.attribute.resize(name_len);
    if (name_len > 0 &&
        !in.read(enc.attribute.data(), static_cast<std::streamsize>(name_len))) {
        throw FormatError("truncated encoder checkpoint: " + path.string());
    }
    read_doubles(in, &enc.self_loop_weight, 1, path);
    const std::uint32_t f_in = get_u32_le(in, path);
    const std::uint32_t d_h = get_u32_le(in, path);
    const std::uint32_t d = get_u32_le(in, path);
    enc.params.w1 = Matrix(f_in, d_h);
    enc.params.b1.resize(d_h);
    enc.params.w2 = Matrix(d_h, d);
    enc.params.b2.resize(d);
    enc.params.scoring = Matrix(d, d);
    read_doubles(in, enc.params.w1.data().data(), enc.params.w1.data().size(), path);
    read_doubles(in, enc.params.b1.data(), enc.params.b1.size(), path);
    read_doubles(in, enc.params.w2.data().data(), enc.params.w2.data().size(), path);
    read_doubles(in, enc.params.b2.data(), enc.params.b2.size(), path);
    read_doubles(in, enc.params.scoring.data().data(), enc.params.scoring.data().size(), path);
    return enc;
}

} // namespace ipad
