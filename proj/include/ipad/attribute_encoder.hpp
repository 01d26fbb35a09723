#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "ipad/features.hpp"
#include "ipad/matrix.hpp"

namespace ipad {

/// Same-attribute adjacency stored as a partition of cliques: every known
/// attribute value groups its nodes into a fully connected block, and
/// "unknown" nodes stay isolated. The implied adjacency has A_ij = 1 iff
/// i != j share a block; propagation adds a self loop of weight
/// self_loop_weight to every node.
struct AttributeGraph {
    Matrix node_features; // N x f_in
    std::map<std::string, std::vector<std::size_t>> partition; // value -> sorted node indices
    double self_loop_weight = 1.0;

    std::size_t num_nodes() const { return node_features.rows(); }
    std::size_t feature_dim() const { return node_features.cols(); }
};

struct EncoderParams {
    Matrix w1; // f_in x d_h
    std::vector<double> b1; // d_h
    Matrix w2; // d_h x d
    std::vector<double> b2; // d
    Matrix scoring; // d x d

    std::size_t input_dim() const { return w1.rows(); }
    std::size_t hidden_dim() const { return w1.cols(); }
    std::size_t output_dim() const { return w2.cols(); }
};

struct EncoderGradients {
    Matrix w1;
    std::vector<double> b1;
    Matrix w2;
    std::vector<double> b2;
    Matrix scoring;
};

struct NodeRepresentations {
    Matrix local; // H: N x d, nonnegative
    std::vector<double> summary; // s: d, entries in (0, 1)
};

struct EncoderTrainConfig {
    double learning_rate = 1e-2;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
    double self_loop_weight = 1.0;
    std::size_t hidden_dim = 128;
    std::size_t output_dim = 128;
};

struct TrainedAttributeEncoder {
    EncoderParams params;
    std::string attribute;
    double self_loop_weight = 1.0;
    std::vector<double> loss_trace; // one entry per epoch
};

AttributeGraph build_attribute_graph(const std::vector<UtteranceEmbedding>& embeddings,
                                     const std::vector<std::string>& values,
                                     double self_loop_weight);

/// H = ReLU(normalized-adjacency * E(X)) with E(X) = ReLU(X W1 + b1) W2 + b2.
/// Evaluated blockwise: a node in a block of size m mixes its neighbors with
/// weight 1/(m-1+w) each and itself with w/(m-1+w); isolated nodes pass
/// through unchanged.
Matrix propagate(const AttributeGraph& g, const EncoderParams& p);

/// s = sigmoid(column mean of H).
std::vector<double> readout(const Matrix& h);

NodeRepresentations encode_graph(const AttributeGraph& g, const EncoderParams& p);

std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed);

/// Row-shuffled copy of x, drawn from the seeded generator.
Matrix corrupt(const Matrix& x, std::uint64_t seed);

/// sigmoid(h^T M s).
double discriminate(std::span<const double> h, std::span<const double> s, const Matrix& scoring);

struct EncoderLoss {
    double loss = 0.0;
    EncoderGradients grads;
};

/// Mutual-information loss over positive (node, summary) pairs and negatives
/// built from the corrupted features propagated over the same adjacency:
///   loss = -(1/2N) [sum_i log D(h_i, s) + sum_j log(1 - D(h'_j, s))]
/// Gradients are exact analytic derivatives with respect to all parameters.
/// Log arguments are clamped below at 1e-12.
EncoderLoss infomax_loss(const AttributeGraph& g, const EncoderParams& p, std::uint64_t seed);
EncoderLoss infomax_loss(const AttributeGraph& g, const EncoderParams& p,
                         const std::vector<std::size_t>& permutation);

/// Full-batch gradient descent with a fresh corruption permutation each
/// epoch. Deterministic per seed: parameter init and all permutations come
/// from one generator seeded with config.seed.
TrainedAttributeEncoder train_attribute_encoder(const AttributeGraph& g,
                                                const std::string& attribute,
                                                const EncoderTrainConfig& config);

/// Test-time encoding of one utterance as an isolated node. The self-loop
/// normalization cancels, so this is exactly ReLU(E(x)).
std::vector<double> encode_single(std::span<const double> x, const EncoderParams& p);

void save_encoder(const TrainedAttributeEncoder& enc, const std::filesystem::path& path);
TrainedAttributeEncoder load_encoder(const std::filesystem::path& path);

} // namespace ipad
