#include "ipad/features.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <complex>
#include <cstring>
#include <fstream>
#include <numbers>

#include "ipad/errors.hpp"

namespace ipad {

const char* to_string(FeatureKind k) {
    switch (k) {
        case FeatureKind::lfcc: return "lfcc";
        case FeatureKind::mfcc: return "mfcc";
        case FeatureKind::imfcc: return "imfcc";
        default: return "external";
    }
}

std::optional<FeatureKind> parse_feature_kind(const std::string& s) {
    if (s == "lfcc") return FeatureKind::lfcc;
    if (s == "mfcc") return FeatureKind::mfcc;
    if (s == "imfcc") return FeatureKind::imfcc;
    if (s == "external") return FeatureKind::external;
    return std::nullopt;
}

double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

namespace {

// In-place iterative radix-2 FFT; n must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = a[i + k];
                const std::complex<double> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::vector<double> power_spectrum(const std::vector<double>& frame, std::size_t fft_size) {
    std::vector<std::complex<double>> buf(fft_size, {0.0, 0.0});
    for (std::size_t i = 0; i < frame.size(); ++i) buf[i] = frame[i];
    fft_radix2(buf);
    std::vector<double> power(fft_size / 2 + 1);
    for (std::size_t b = 0; b < power.size(); ++b) power[b] = std::norm(buf[b]);
    return power;
}

bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

void fill_triangles(Matrix& weights, const std::vector<double>& edges_hz, std::size_t fft_size,
                    int sample_rate) {
    const std::size_t n_filters = weights.rows();
    const double bin_hz = static_cast<double>(sample_rate) / static_cast<double>(fft_size);
    for (std::size_t k = 0; k < n_filters; ++k) {
        const double lo = edges_hz[k];
        const double center = edges_hz[k + 1];
        const double hi = edges_hz[k + 2];
        for (std::size_t b = 0; b < weights.cols(); ++b) {
            const double f = static_cast<double>(b) * bin_hz;
            double w = 0.0;
            if (f > lo && f < center) {
                w = (f - lo) / (center - lo);
            } else if (f == center) {
                w = 1.0;
            } else if (f > center && f < hi) {
                w = (hi - f) / (hi - center);
            }
            weights(k, b) = w;
        }
    }
}

} // namespace

std::vector<std::vector<double>> frame_signal(const AudioClip& clip, const FrameSpec& spec) {
    const std::size_t win = spec.window_samples(clip.sample_rate);
    const std::size_t hop = spec.hop_samples(clip.sample_rate);
    if (win == 0 || hop == 0 || hop > win) {
        throw ConfigError("invalid frame spec: window and hop must be positive, hop <= window");
    }
    const std::size_t n = clip.samples.size();
    if (n < win) {
        throw ConfigError("clip '" + clip.utt_id + "' shorter than one analysis window (" +
                          std::to_string(n) + " < " + std::to_string(win) + " samples)");
    }

    // Hann taper.
    std::vector<double> taper(win, 1.0);
    for (std::size_t i = 0; win > 1 && i < win; ++i) {
        taper[i] =
            0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                 static_cast<double>(win - 1));
    }

    const std::size_t count = (n - win) / hop + 1;
    std::vector<std::vector<double>> frames(count);
    for (std::size_t t = 0; t < count; ++t) {
        frames[t].resize(win);
        const double* src = clip.samples.data() + t * hop;
        for (std::size_t i = 0; i < win; ++i) frames[t][i] = src[i] * taper[i];
    }
    return frames;
}

Filterbank build_filterbank(FilterbankKind kind, std::size_t n_filters, double fmin, double fmax,
                            std::size_t fft_size, int sample_rate) {
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) {
        throw ConfigError("invalid filterbank band edges: need 0 <= fmin < fmax <= rate/2");
    }
    if (n_filters == 0) {
        throw ConfigError("filterbank needs at least one filter");
    }
    if (!is_power_of_two(fft_size)) {
        throw ConfigError("fft_size must be a power of two");
    }

    // n_filters + 2 edge points; triangle k spans edges [k, k+2].
    std::vector<double> edges(n_filters + 2);
    if (kind == FilterbankKind::linear) {
        for (std::size_t i = 0; i < edges.size(); ++i) {
            edges[i] = fmin + (fmax - fmin) * static_cast<double>(i) /
                                  static_cast<double>(n_filters + 1);
        }
    } else {
        const double mel_lo = hz_to_mel(fmin);
        const double mel_hi = hz_to_mel(fmax);
        for (std::size_t i = 0; i < edges.size(); ++i) {
            edges[i] = mel_to_hz(mel_lo + (mel_hi - mel_lo) * static_cast<double>(i) /
                                              static_cast<double>(n_filters + 1));
        }
        if (kind == FilterbankKind::inverted_mel) {
            // Mirror the mel edges about the band midpoint, then re-ascend.
            std::vector<double> mirrored(edges.size());
            for (std::size_t i = 0; i < edges.size(); ++i) {
                mirrored[i] = fmin + fmax - edges[edges.size() - 1 - i];
            }
            edges = std::move(mirrored);
        }
    }

    Filterbank fb;
    fb.kind = kind;
    fb.fmin = fmin;
    fb.fmax = fmax;
    fb.weights = Matrix(n_filters, fft_size / 2 + 1);
    fill_triangles(fb.weights, edges, fft_size, sample_rate);

    for (std::size_t k = 0; k < n_filters; ++k) {
        double row_sum = 0.0;
        for (std::size_t b = 0; b < fb.weights.cols(); ++b) row_sum += fb.weights(k, b);
        if (row_sum <= 0.0) {
            throw ConfigError("filter " + std::to_string(k) +
                              " covers no FFT bin; increase fft_size or widen the band");
        }
    }
    return fb;
}

std::vector<double> dct2_orthonormal(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<double> c(n, 0.0);
    const double scale0 = std::sqrt(1.0 / static_cast<double>(n));
    const double scale = std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < n; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            acc += x[i] * std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) *
                                   static_cast<double>(k) / static_cast<double>(n));
        }
        c[k] = acc * (k == 0 ? scale0 : scale);
    }
    return c;
}

std::vector<double> idct2_orthonormal(std::span<const double> c) {
    const std::size_t n = c.size();
    std::vector<double> x(n, 0.0);
    const double scale0 = std::sqrt(1.0 / static_cast<double>(n));
    const double scale = std::sqrt(2.0 / static_cast<double>(n));
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            acc += c[k] * (k == 0 ? scale0 : scale) *
                   std::cos(std::numbers::pi * (static_cast<double>(i) + 0.5) *
                            static_cast<double>(k) / static_cast<double>(n));
        }
        x[i] = acc;
    }
    return x;
}

FeatureMatrix cepstral_features(const AudioClip& clip, const FrameSpec& spec, const Filterbank& fb,
                                std::size_t n_ceps) {
    const std::size_t n_filters = fb.n_filters();
    if (n_ceps == 0 || n_ceps > n_filters) {
        throw ConfigError("n_ceps must be in [1, n_filters]");
    }
    const std::size_t win = spec.window_samples(clip.sample_rate);
    if (spec.fft_size < win) {
        throw ConfigError("fft_size must be >= window length in samples");
    }
    if (fb.weights.cols() != spec.fft_size / 2 + 1) {
        throw ConfigError("filterbank was built for a different fft_size");
    }

    const auto frames = frame_signal(clip, spec);

    FeatureMatrix fm;
    switch (fb.kind) {
        case FilterbankKind::linear: fm.kind = FeatureKind::lfcc; break;
        case FilterbankKind::mel: fm.kind = FeatureKind::mfcc; break;
        case FilterbankKind::inverted_mel: fm.kind = FeatureKind::imfcc; break;
    }
    fm.utt_id = clip.utt_id;
    fm.values = Matrix(frames.size(), n_ceps);

    std::vector<double> log_energy(n_filters);
    for (std::size_t t = 0; t < frames.size(); ++t) {
        const auto power = power_spectrum(frames[t], spec.fft_size);
        for (std::size_t k = 0; k < n_filters; ++k) {
            double e = 0.0;
            const double* wrow = fb.weights.row(k);
            for (std::size_t b = 0; b < power.size(); ++b) e += wrow[b] * power[b];
            log_energy[k] = std::log(std::max(e, kLogEnergyFloor));
        }
        const auto ceps = dct2_orthonormal(log_energy);
        for (std::size_t c = 0; c < n_ceps; ++c) fm.values(t, c) = ceps[c];
    }
    return fm;
}

UtteranceEmbedding embed_utterance(const FeatureMatrix& fm) {
    const std::size_t t = fm.frames();
    const std::size_t f = fm.dim();
    if (t == 0) {
        throw ConfigError("cannot embed an empty feature matrix");
    }
    UtteranceEmbedding emb;
    emb.values.resize(2 * f);
    for (std::size_t c = 0; c < f; ++c) {
        double mean = 0.0;
        for (std::size_t r = 0; r < t; ++r) mean += fm.values(r, c);
        mean /= static_cast<double>(t);
        double var = 0.0;
        for (std::size_t r = 0; r < t; ++r) {
            const double d = fm.values(r, c) - mean;
            var += d * d;
        }
        var /= static_cast<double>(t);
        emb.values[c] = mean;
        emb.values[f + c] = std::sqrt(var);
    }
    return emb;
}

namespace {

constexpr char kFeatureMagic[8] = {'I', 'P', 'A', 'D', 'F', 'E', 'A', 'T'};
constexpr std::uint32_t kFeatureVersion = 1;

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
        throw FormatError("truncated feature file: " + path.string());
    }
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

} // namespace

void write_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
    if (fm.frames() == 0 || fm.dim() == 0) {
        throw ConfigError("refusing to write an empty feature matrix for '" + fm.utt_id + "'");
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write feature file: " + path.string());
    }
    out.write(kFeatureMagic, sizeof(kFeatureMagic));
    put_u32_le(out, kFeatureVersion);
    put_u32_le(out, static_cast<std::uint32_t>(fm.frames()));
    put_u32_le(out, static_cast<std::uint32_t>(fm.dim()));
    const std::uint8_t tag = static_cast<std::uint8_t>(fm.kind);
    out.write(reinterpret_cast<const char*>(&tag), 1);
    // Values are IEEE-754 doubles, written little-endian row-major. This
    // build targets little-endian hosts, so the raw bytes are already LE.
    static_assert(std::endian::native == std::endian::little);
    out.write(reinterpret_cast<const char*>(fm.values.data().data()),
              static_cast<std::streamsize>(fm.values.data().size() * sizeof(double)));
    out.flush();
    if (!out) {
        throw IoError("write failure on feature file: " + path.string());
    }
}

FeatureMatrix read_features(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open feature file: " + path.string());
    }
    char magic[8];
    if (!in.read(magic, sizeof(magic)) || std::memcmp(magic, kFeatureMagic, 8) != 0) {
        throw FormatError("bad feature file magic: " + path.string());
    }
    const std::uint32_t version = get_u32_le(in, path);
    if (version != kFeatureVersion) {
        throw FormatError("unsupported feature file version " + std::to_string(version) + ": " +
                          path.string());
    }
    const std::uint32_t t = get_u32_le(in, path);
    const std::uint32_t f = get_u32_le(in, path);
    std::uint8_t tag = 0;
    if (!in.read(reinterpret_cast<char*>(&tag), 1)) {
        throw FormatError("truncated feature file: " + path.string());
    }
    if (tag != 0 && tag != 1 && tag != 2 && tag != 255) {
        throw FormatError("unknown feature kind tag " + std::to_string(tag) + ": " + path.string());
    }
    if (t == 0 || f == 0) {
        throw FormatError("empty feature matrix in file: " + path.string());
    }

    FeatureMatrix fm;
    fm.kind = static_cast<FeatureKind>(tag);
    fm.utt_id = path.stem().string();
    fm.values = Matrix(t, f);
    static_assert(std::endian::native == std::endian::little);
    if (!in.read(reinterpret_cast<char*>(fm.values.data().data()),
                 static_cast<std::streamsize>(fm.values.data().size() * sizeof(double)))) {
        throw FormatError("truncated feature file: " + path.string());
    }
    return fm;
}

} // namespace ipad
