#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

namespace ipad {

enum class Gender { male, female, unknown };
enum class AgeGroup { age_20_35, age_35_50, over_50, unknown };
enum class Label { genuine, fake };
enum class Scenario { dubbing, conversational, singing, other };

const char* to_string(Gender g);
const char* to_string(AgeGroup a);
const char* to_string(Label l);
const char* to_string(Scenario s);

std::optional<Gender> parse_gender(const std::string& s);
std::optional<AgeGroup> parse_age_group(const std::string& s);
std::optional<Label> parse_label(const std::string& s);
std::optional<Scenario> parse_scenario(const std::string& s);

struct SpeakerAttributes {
    Gender gender = Gender::unknown;
    AgeGroup age_group = AgeGroup::unknown;
    std::string hometown = "unknown";
    std::string job = "unknown";

    bool operator==(const SpeakerAttributes&) const = default;
};

struct UtteranceRecord {
    std::string utt_id;
    std::string audio_path;
    std::string speaker_id;
    Label label = Label::genuine;
    Scenario scenario = Scenario::other;
    SpeakerAttributes attributes;
    double duration_s = 0.0; // 0 = unknown

    bool operator==(const UtteranceRecord&) const = default;
};

struct Manifest {
    std::vector<UtteranceRecord> records;

    bool operator==(const Manifest&) const = default;
};

/// Relative weights for the train/dev/test allocation; need not sum to 1.
struct SplitRatios {
    double train = 3.0;
    double dev = 2.0;
    double test = 5.0;
};

struct SplitResult {
    Manifest train;
    Manifest dev;
    Manifest test;
    Manifest unseen;
};

/// Reads a line-delimited manifest. Each line is one JSON record with exactly
/// the UtteranceRecord fields; errors carry the 1-based line number.
Manifest load_manifest(const std::filesystem::path& path);

/// Writes one record per line with a fixed field order, so that reruns over
/// the same data are byte-identical.
void save_manifest(const Manifest& m, const std::filesystem::path& path);

/// Returns one description per invariant violation; empty means valid.
std::vector<std::string> validate(const Manifest& m);

inline const std::set<Scenario> kDefaultUnseenScenarios = {Scenario::singing, Scenario::other};

/// Speaker-disjoint split. Records whose scenario is in unseen_scenarios go
/// to the unseen set; the rest are allocated per (age_group, gender) stratum
/// by greedy largest-deficit assignment of whole speakers, targeting the
/// given utterance-count ratios. Deterministic; the seed is accepted for
/// interface stability but the greedy needs no randomness.
SplitResult stratified_split(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed,
                             const std::set<Scenario>& unseen_scenarios);
SplitResult stratified_split(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed);

} // namespace ipad
