#pragma once

#include <filesystem>
#include <string>
#include <vector>

namespace ipad {

inline constexpr int kSampleRate = 16000;

struct AudioClip {
    std::vector<double> samples; // amplitudes in [-1, 1)
    int sample_rate = kSampleRate;
    std::string utt_id;
};

/// Reads a RIFF/WAVE file. Only PCM 16-bit mono at 16 kHz is accepted;
/// anything else raises FormatError. Samples are scaled by 1/32768.
AudioClip read_wav(const std::filesystem::path& path, std::string utt_id = "");

/// Writes mono 16 kHz PCM16. Samples are clamped to [-1, 32767/32768]
/// before quantization.
void write_wav_pcm16(const std::filesystem::path& path, const std::vector<double>& samples);

} // namespace ipad
