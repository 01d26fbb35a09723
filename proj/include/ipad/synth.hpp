#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "ipad/manifest.hpp"
#include "ipad/rng.hpp"

namespace ipad {

struct SynthConfig {
    std::size_t n_speakers = 40;
    std::size_t utts_per_speaker = 20;
    double impersonation_fraction = 0.5;
    std::size_t n_hometowns = 6;
    std::size_t n_jobs = 5;
    double duration_s = 1.0;
    double noise_level = 0.01;
    std::uint64_t seed = 0;
};

/// A synthetic voice: fundamental frequency plus acoustic cues tied to the
/// speaker's attributes. An imitator copies a target's F0 exactly but keeps
/// their own cue parameters.
struct SynthSpeaker {
    std::string speaker_id;
    double f0_hz = 150.0; // in [80, 400]
    SpeakerAttributes attributes;
    double tilt = 1.0; // hometown cue: per-harmonic amplitude decay exponent
    double am_rate_hz = 4.0; // job cue: amplitude-modulation rate
};

/// Cue parameters as deterministic functions of the attribute token.
double hometown_tilt(const std::string& hometown);
double job_am_rate(const std::string& job);

std::vector<SynthSpeaker> make_speakers(const SynthConfig& config);

/// Harmonic series at f0 with per-harmonic decay k^-tilt, a sinusoidal
/// amplitude envelope at am_rate_hz, and additive white noise; RMS-normalized.
std::vector<double> render_utterance(double f0_hz, double tilt, double am_rate_hz,
                                     double duration_s, double noise_level, Rng& rng);

/// Writes <out_dir>/wav/*.wav and <out_dir>/manifest.jsonl and returns the
/// manifest. Byte-identical for identical config.
Manifest generate_corpus(const SynthConfig& config, const std::filesystem::path& out_dir);

} // namespace ipad
