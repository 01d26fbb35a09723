#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ipad/matrix.hpp"
#include "ipad/wav.hpp"

namespace ipad {

struct FrameSpec {
    int window_ms = 50;
    int hop_ms = 20;
    std::size_t fft_size = 1024;

    std::size_t window_samples(int sample_rate) const {
        return static_cast<std::size_t>(window_ms) * static_cast<std::size_t>(sample_rate) / 1000;
    }
    std::size_t hop_samples(int sample_rate) const {
        return static_cast<std::size_t>(hop_ms) * static_cast<std::size_t>(sample_rate) / 1000;
    }
};

enum class FilterbankKind : std::uint8_t { linear, mel, inverted_mel };

enum class FeatureKind : std::uint8_t { lfcc = 0, mfcc = 1, imfcc = 2, external = 255 };

const char* to_string(FeatureKind k);
std::optional<FeatureKind> parse_feature_kind(const std::string& s);

struct Filterbank {
    FilterbankKind kind = FilterbankKind::linear;
    Matrix weights; // n_filters x (fft_size/2 + 1), triangular rows
    double fmin = 0.0;
    double fmax = 8000.0;

    std::size_t n_filters() const { return weights.rows(); }
};

struct FeatureMatrix {
    Matrix values; // t frames x f coefficients
    FeatureKind kind = FeatureKind::lfcc;
    std::string utt_id;

    std::size_t frames() const { return values.rows(); }
    std::size_t dim() const { return values.cols(); }
};

/// Per-coefficient mean concatenated with per-coefficient population
/// standard deviation; length 2 * f.
struct UtteranceEmbedding {
    std::vector<double> values;
};

double hz_to_mel(double hz);
double mel_to_hz(double mel);

/// Cuts the clip into floor((L - win) / hop) + 1 frames and applies the
/// raised-cosine (Hann) taper. Throws if the clip is shorter than a window.
std::vector<std::vector<double>> frame_signal(const AudioClip& clip, const FrameSpec& spec);

Filterbank build_filterbank(FilterbankKind kind, std::size_t n_filters, double fmin, double fmax,
                            std::size_t fft_size, int sample_rate);

/// Orthonormal DCT-II of x and its inverse.
std::vector<double> dct2_orthonormal(std::span<const double> x);
std::vector<double> idct2_orthonormal(std::span<const double> c);

/// Log floor applied to filterbank energies before the DCT.
inline constexpr double kLogEnergyFloor = 1e-10;

/// Power spectrum -> filterbank energies -> log -> DCT-II, keeping the first
/// n_ceps coefficients per frame (coefficient 0 included).
FeatureMatrix cepstral_features(const AudioClip& clip, const FrameSpec& spec, const Filterbank& fb,
                                std::size_t n_ceps);

UtteranceEmbedding embed_utterance(const FeatureMatrix& fm);

/// Binary feature file; see README for the exact layout. Round trips are
/// bit-exact. Writing an empty matrix is rejected.
void write_features(const FeatureMatrix& fm, const std::filesystem::path& path);
FeatureMatrix read_features(const std::filesystem::path& path);

} // namespace ipad
