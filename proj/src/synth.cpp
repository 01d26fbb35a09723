#include "ipad/synth.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "ipad/errors.hpp"
#include "ipad/wav.hpp"

namespace ipad {

namespace {

// Trailing integer of tokens like "ht3" / "job2"; hashed fallback for
// anything else so arbitrary tokens still map to a stable cue.
std::uint64_t token_index(const std::string& token) {
    std::size_t pos = token.size();
    while (pos > 0 && std::isdigit(static_cast<unsigned char>(token[pos - 1]))) --pos;
    if (pos < token.size()) {
        return std::stoull(token.substr(pos));
    }
    std::uint64_t h = 1469598103934665603ull; // FNV-1a
    for (char c : token) {
        h ^= static_cast<unsigned char>(c);
        h *= 1099511628211ull;
    }
    return h;
}

struct F0Band {
    double lo;
    double hi;
};

F0Band age_band(AgeGroup a) {
    switch (a) {
        case AgeGroup::age_20_35: return {170.0, 230.0};
        case AgeGroup::age_35_50: return {135.0, 185.0};
        case AgeGroup::over_50: return {105.0, 150.0};
        default: return {120.0, 210.0};
    }
}

double gender_factor(Gender g) {
    switch (g) {
        case Gender::male: return 0.78;
        case Gender::female: return 1.12;
        default: return 0.95;
    }
}

void check_config(const SynthConfig& c) {
    if (c.n_speakers < 2) {
        throw ConfigError("synthgen needs at least 2 speakers");
    }
    if (c.utts_per_speaker == 0) {
        throw ConfigError("utts_per_speaker must be >= 1");
    }
    if (!(c.impersonation_fraction >= 0.0 && c.impersonation_fraction <= 1.0)) {
        throw ConfigError("impersonation_fraction must lie in [0, 1]");
    }
    if (c.n_hometowns == 0 || c.n_jobs == 0) {
        throw ConfigError("attribute vocab sizes must be >= 1");
    }
    if (!(c.duration_s >= 0.2)) {
        throw ConfigError("utterance duration must be >= 0.2 s");
    }
    if (!(c.noise_level >= 0.0)) {
        throw ConfigError("noise_level must be nonnegative");
    }
}

} // namespace

double hometown_tilt(const std::string& hometown) {
    if (hometown == "unknown") return 1.2;
    return 0.6 + 0.22 * static_cast<double>(token_index(hometown) % 8);
}

double job_am_rate(const std::string& job) {
    if (job == "unknown") return 4.5;
    return 2.0 + 0.9 * static_cast<double>(token_index(job) % 8);
}

std::vector<SynthSpeaker> make_speakers(const SynthConfig& config) {
    check_config(config);
    Rng rng(config.seed);
    std::vector<SynthSpeaker> speakers;
    speakers.reserve(config.n_speakers);
    for (std::size_t i = 0; i < config.n_speakers; ++i) {
        SynthSpeaker spk;
        char id[32];
        std::snprintf(id, sizeof(id), "spk%04zu", i);
        spk.speaker_id = id;

        const double gr = rng.uniform_real();
        spk.attributes.gender =
            gr < 0.48 ? Gender::male : (gr < 0.96 ? Gender::female : Gender::unknown);
        const double ar = rng.uniform_real();
        if (ar < 0.30) {
            spk.attributes.age_group = AgeGroup::age_20_35;
        } else if (ar < 0.60) {
            spk.attributes.age_group = AgeGroup::age_35_50;
        } else if (ar < 0.90) {
            spk.attributes.age_group = AgeGroup::over_50;
        } else {
            spk.attributes.age_group = AgeGroup::unknown;
        }
        if (rng.uniform_real() < 0.05) {
            spk.attributes.hometown = "unknown";
        } else {
            spk.attributes.hometown = "ht" + std::to_string(rng.uniform_index(config.n_hometowns));
        }
        if (rng.uniform_real() < 0.05) {
            spk.attributes.job = "unknown";
        } else {
            spk.attributes.job = "job" + std::to_string(rng.uniform_index(config.n_jobs));
        }

        const F0Band band = age_band(spk.attributes.age_group);
        spk.f0_hz = std::clamp(rng.uniform_real(band.lo, band.hi) *
                                   gender_factor(spk.attributes.gender),
                               80.0, 400.0);
        spk.tilt = hometown_tilt(spk.attributes.hometown);
        spk.am_rate_hz = job_am_rate(spk.attributes.job);
        speakers.push_back(std::move(spk));
    }
    return speakers;
}

std::vector<double> render_utterance(double f0_hz, double tilt, double am_rate_hz,
                                     double duration_s, double noise_level, Rng& rng) {
    const std::size_t n = static_cast<std::size_t>(std::lround(duration_s * kSampleRate));
    const std::size_t n_harmonics =
        std::min<std::size_t>(24, static_cast<std::size_t>(7600.0 / f0_hz));

    std::vector<double> phase(n_harmonics);
    for (double& p : phase) p = rng.uniform_real(0.0, 2.0 * std::numbers::pi);
    const double am_phase = rng.uniform_real(0.0, 2.0 * std::numbers::pi);

    std::vector<double> amp(n_harmonics);
    for (std::size_t k = 0; k < n_harmonics; ++k) {
        amp[k] = std::pow(static_cast<double>(k + 1), -tilt);
    }

    std::vector<double> samples(n, 0.0);
    double energy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double t = static_cast<double>(i) / kSampleRate;
        double v = 0.0;
        for (std::size_t k = 0; k < n_harmonics; ++k) {
            v += amp[k] *
                 std::sin(2.0 * std::numbers::pi * f0_hz * static_cast<double>(k + 1) * t +
                          phase[k]);
        }
        v *= 1.0 + 0.35 * std::sin(2.0 * std::numbers::pi * am_rate_hz * t + am_phase);
        samples[i] = v;
        energy += v * v;
    }
    const double rms = std::sqrt(energy / static_cast<double>(n));
    const double gain = rms > 0.0 ? 0.15 / rms : 0.0;
    for (double& v : samples) v *= gain;
    if (noise_level > 0.0) {
        for (double& v : samples) v += noise_level * rng.normal();
    }
    return samples;
}

Manifest generate_corpus(const SynthConfig& config, const std::filesystem::path& out_dir) {
    check_config(config);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "wav", ec);
    if (ec) {
        throw ConfigError("output directory is not writable: " + out_dir.string() + " (" +
                          ec.message() + ")");
    }
    {
        const auto probe_path = out_dir / ".write_probe";
        std::ofstream probe(probe_path, std::ios::binary | std::ios::trunc);
        probe << "ok";
        probe.close();
        if (!probe) {
            throw ConfigError("output directory is not writable: " + out_dir.string());
        }
        std::filesystem::remove(probe_path, ec);
    }

    const auto speakers = make_speakers(config);
    Rng rng(config.seed + 0x53594e54u); // separate stream from make_speakers

    Manifest manifest;
    std::size_t counter = 0;
    for (std::size_t si = 0; si < speakers.size(); ++si) {
        const SynthSpeaker& performer = speakers[si];
        for (std::size_t u = 0; u < config.utts_per_speaker; ++u) {
            const bool fake = rng.uniform_real() < config.impersonation_fraction;
            double f0 = performer.f0_hz;
            if (fake) {
                // The imitator copies the target's pitch exactly; cue
                // parameters stay their own.
                std::size_t target = rng.uniform_index(speakers.size() - 1);
                if (target >= si) ++target;
                f0 = speakers[target].f0_hz;
            }

            const double sr = rng.uniform_real();
            Scenario scenario;
            if (sr < 0.45) {
                scenario = Scenario::dubbing;
            } else if (sr < 0.90) {
                scenario = Scenario::conversational;
            } else if (sr < 0.95) {
                scenario = Scenario::singing;
            } else {
                scenario = Scenario::other;
            }

            char id[32];
            std::snprintf(id, sizeof(id), "u%06zu", counter++);

            const auto samples = render_utterance(f0, performer.tilt, performer.am_rate_hz,
                                                  config.duration_s, config.noise_level, rng);
            const std::string wav_rel = std::string("wav/") + id + ".wav";
            write_wav_pcm16(out_dir / wav_rel, samples);

            UtteranceRecord rec;
            rec.utt_id = id;
            rec.audio_path = wav_rel;
            rec.speaker_id = performer.speaker_id;
            rec.label = fake ? Label::fake : Label::genuine;
            rec.scenario = scenario;
            rec.attributes = performer.attributes;
            rec.duration_s = config.duration_s;
            manifest.records.push_back(std::move(rec));
        }
    }

    std::sort(manifest.records.begin(), manifest.records.end(),
              [](const UtteranceRecord& a, const UtteranceRecord& b) { return a.utt_id < b.utt_id; });
    save_manifest(manifest, out_dir / "manifest.jsonl");
    return manifest;
}

} // namespace ipad
