#include "ipad/wav.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "ipad/errors.hpp"

namespace ipad {

namespace {

std::uint16_t read_u16(const std::uint8_t* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t read_u32(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void put_u16(std::uint8_t* p, std::uint16_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xff);
    p[1] = static_cast<std::uint8_t>(v >> 8);
}

void put_u32(std::uint8_t* p, std::uint32_t v) {
    p[0] = static_cast<std::uint8_t>(v & 0xff);
    p[1] = static_cast<std::uint8_t>((v >> 8) & 0xff);
    p[2] = static_cast<std::uint8_t>((v >> 16) & 0xff);
    p[3] = static_cast<std::uint8_t>((v >> 24) & 0xff);
}

} // namespace

AudioClip read_wav(const std::filesystem::path& path, std::string utt_id) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open wav file: " + path.string());
    }

    std::array<std::uint8_t, 12> riff{};
    if (!in.read(reinterpret_cast<char*>(riff.data()), riff.size())) {
        throw FormatError("truncated wav header: " + path.string());
    }
    if (std::memcmp(riff.data(), "RIFF", 4) != 0 || std::memcmp(riff.data() + 8, "WAVE", 4) != 0) {
        throw FormatError("not a RIFF/WAVE file: " + path.string());
    }

    bool have_fmt = false;
    std::uint16_t format_tag = 0, channels = 0, bits = 0;
    std::uint32_t sample_rate = 0;
    std::vector<std::uint8_t> data;

    // Walk chunks until the data chunk; tolerate extra chunks like LIST.
    std::array<std::uint8_t, 8> head{};
    while (in.read(reinterpret_cast<char*>(head.data()), head.size())) {
        const std::uint32_t size = read_u32(head.data() + 4);
        if (std::memcmp(head.data(), "fmt ", 4) == 0) {
            std::vector<std::uint8_t> fmt(size);
            if (size < 16 || !in.read(reinterpret_cast<char*>(fmt.data()), size)) {
                throw FormatError("truncated fmt chunk: " + path.string());
            }
            format_tag = read_u16(fmt.data());
            channels = read_u16(fmt.data() + 2);
            sample_rate = read_u32(fmt.data() + 4);
            bits = read_u16(fmt.data() + 14);
            have_fmt = true;
        } else if (std::memcmp(head.data(), "data", 4) == 0) {
            data.resize(size);
            if (!in.read(reinterpret_cast<char*>(data.data()), size)) {
                throw FormatError("truncated data chunk: " + path.string());
            }
            break;
        } else {
            in.seekg(size + (size & 1), std::ios::cur);
        }
        if (size & 1) in.seekg(1, std::ios::cur);
    }

    if (!have_fmt || data.empty()) {
        throw FormatError("missing fmt or data chunk: " + path.string());
    }
    if (format_tag != 1) {
        throw FormatError("unsupported wav codec (want PCM): " + path.string());
    }
    if (channels != 1) {
        throw FormatError("unsupported channel count " + std::to_string(channels) +
                          " (want mono): " + path.string());
    }
    if (bits != 16) {
        throw FormatError("unsupported sample width " + std::to_string(bits) +
                          " (want 16-bit): " + path.string());
    }
    if (sample_rate != kSampleRate) {
        throw FormatError("unsupported sample rate " + std::to_string(sample_rate) + " (want " +
                          std::to_string(kSampleRate) + "): " + path.string());
    }
    if (data.size() % 2 != 0) {
        throw FormatError("odd data chunk size: " + path.string());
    }

    AudioClip clip;
    clip.sample_rate = kSampleRate;
    clip.utt_id = utt_id.empty() ? path.stem().string() : std::move(utt_id);
    clip.samples.resize(data.size() / 2);
    for (std::size_t i = 0; i < clip.samples.size(); ++i) {
        const auto raw = static_cast<std::int16_t>(read_u16(data.data() + 2 * i));
        clip.samples[i] = static_cast<double>(raw) / 32768.0;
    }
    if (clip.samples.empty()) {
        throw FormatError("wav file has no samples: " + path.string());
    }
    return clip;
}

void write_wav_pcm16(const std::filesystem::path& path, const std::vector<double>& samples) {
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * 2);
    std::array<std::uint8_t, 44> header{};
    std::memcpy(header.data(), "RIFF", 4);
    put_u32(header.data() + 4, 36 + data_bytes);
    std::memcpy(header.data() + 8, "WAVE", 4);
    std::memcpy(header.data() + 12, "fmt ", 4);
    put_u32(header.data() + 16, 16);
    put_u16(header.data() + 20, 1); // PCM
    put_u16(header.data() + 22, 1); // mono
    put_u32(header.data() + 24, kSampleRate);
    put_u32(header.data() + 28, kSampleRate * 2);
    put_u16(header.data() + 32, 2);
    put_u16(header.data() + 34, 16);
    std::memcpy(header.data() + 36, "data", 4);
    put_u32(header.data() + 40, data_bytes);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write wav file: " + path.string());
    }
    out.write(reinterpret_cast<const char*>(header.data()), header.size());
    std::vector<std::uint8_t> buf(samples.size() * 2);
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double v = std::lround(samples[i] * 32768.0);
        if (v > 32767.0) v = 32767.0;
        if (v < -32768.0) v = -32768.0;
        put_u16(buf.data() + 2 * i, static_cast<std::uint16_t>(static_cast<std::int16_t>(v)));
    }
    out.write(reinterpret_cast<const char*>(buf.data()), buf.size());
    out.flush();
    if (!out) {
        throw IoError("write failure on wav file: " + path.string());
    }
}

} // namespace ipad
