#include "ipad/manifest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "ipad/errors.hpp"

namespace ipad {

using ordered_json = nlohmann::ordered_json;

const char* to_string(Gender g) {
    switch (g) {
        case Gender::male: return "male";
        case Gender::female: return "female";
        default: return "unknown";
    }
}

const char* to_string(AgeGroup a) {
    switch (a) {
        case AgeGroup::age_20_35: return "20-35";
        case AgeGroup::age_35_50: return "35-50";
        case AgeGroup::over_50: return "over-50";
        default: return "unknown";
    }
}

const char* to_string(Label l) {
    return l == Label::genuine ? "genuine" : "fake";
}

const char* to_string(Scenario s) {
    switch (s) {
        case Scenario::dubbing: return "dubbing";
        case Scenario::conversational: return "conversational";
        case Scenario::singing: return "singing";
        default: return "other";
    }
}

std::optional<Gender> parse_gender(const std::string& s) {
    if (s == "male") return Gender::male;
    if (s == "female") return Gender::female;
    if (s == "unknown") return Gender::unknown;
    return std::nullopt;
}

std::optional<AgeGroup> parse_age_group(const std::string& s) {
    if (s == "20-35") return AgeGroup::age_20_35;
    if (s == "35-50") return AgeGroup::age_35_50;
    if (s == "over-50") return AgeGroup::over_50;
    if (s == "unknown") return AgeGroup::unknown;
    return std::nullopt;
}

std::optional<Label> parse_label(const std::string& s) {
    if (s == "genuine") return Label::genuine;
    if (s == "fake") return Label::fake;
    return std::nullopt;
}

std::optional<Scenario> parse_scenario(const std::string& s) {
    if (s == "dubbing") return Scenario::dubbing;
    if (s == "conversational") return Scenario::conversational;
    if (s == "singing") return Scenario::singing;
    if (s == "other") return Scenario::other;
    return std::nullopt;
}

namespace {

const std::vector<std::string> kRecordFields = {
    "utt_id", "audio_path", "speaker_id", "label", "scenario", "attributes", "duration_s"};
const std::vector<std::string> kAttributeFields = {"gender", "age_group", "hometown", "job"};

[[noreturn]] void line_error(const std::filesystem::path& path, std::size_t line_no,
                             const std::string& what) {
    std::ostringstream msg;
    msg << path.string() << ":" << line_no << ": " << what;
    throw FormatError(msg.str());
}

void check_exact_fields(const ordered_json& obj, const std::vector<std::string>& expected,
                        const std::filesystem::path& path, std::size_t line_no,
                        const std::string& context) {
    for (const auto& field : expected) {
        if (!obj.contains(field)) {
            line_error(path, line_no, "missing field '" + field + "' in " + context);
        }
    }
    for (const auto& [key, value] : obj.items()) {
        (void)value;
        if (std::find(expected.begin(), expected.end(), key) == expected.end()) {
            line_error(path, line_no, "unknown field '" + key + "' in " + context);
        }
    }
}

std::string get_string(const ordered_json& obj, const char* field,
                       const std::filesystem::path& path, std::size_t line_no) {
    const auto& v = obj.at(field);
    if (!v.is_string()) {
        line_error(path, line_no, std::string("field '") + field + "' must be a string");
    }
    return v.get<std::string>();
}

UtteranceRecord parse_record(const std::string& line, const std::filesystem::path& path,
                             std::size_t line_no) {
    ordered_json obj;
    try {
        obj = ordered_json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
        line_error(path, line_no, std::string("malformed record: ") + e.what());
    }
    if (!obj.is_object()) {
        line_error(path, line_no, "record must be an object");
    }
    check_exact_fields(obj, kRecordFields, path, line_no, "record");

    UtteranceRecord rec;
    rec.utt_id = get_string(obj, "utt_id", path, line_no);
    rec.audio_path = get_string(obj, "audio_path", path, line_no);
    rec.speaker_id = get_string(obj, "speaker_id", path, line_no);

    const std::string label = get_string(obj, "label", path, line_no);
    if (auto l = parse_label(label)) {
        rec.label = *l;
    } else {
        line_error(path, line_no, "invalid label '" + label + "'");
    }

    const std::string scenario = get_string(obj, "scenario", path, line_no);
    if (auto s = parse_scenario(scenario)) {
        rec.scenario = *s;
    } else {
        line_error(path, line_no, "invalid scenario '" + scenario + "'");
    }

    const auto& attrs = obj.at("attributes");
    if (!attrs.is_object()) {
        line_error(path, line_no, "field 'attributes' must be an object");
    }
    check_exact_fields(attrs, kAttributeFields, path, line_no, "attributes");

    const std::string gender = get_string(attrs, "gender", path, line_no);
    if (auto g = parse_gender(gender)) {
        rec.attributes.gender = *g;
    } else {
        line_error(path, line_no, "invalid gender '" + gender + "'");
    }

    const std::string age = get_string(attrs, "age_group", path, line_no);
    if (auto a = parse_age_group(age)) {
        rec.attributes.age_group = *a;
    } else {
        line_error(path, line_no, "invalid age_group '" + age + "'");
    }

    rec.attributes.hometown = get_string(attrs, "hometown", path, line_no);
    rec.attributes.job = get_string(attrs, "job", path, line_no);

    const auto& dur = obj.at("duration_s");
    if (!dur.is_number()) {
        line_error(path, line_no, "field 'duration_s' must be a number");
    }
    rec.duration_s = dur.get<double>();
    if (!(rec.duration_s >= 0.0)) {
        line_error(path, line_no, "duration_s must be nonnegative");
    }
    return rec;
}

ordered_json record_to_json(const UtteranceRecord& rec) {
    ordered_json attrs;
    attrs["gender"] = to_string(rec.attributes.gender);
    attrs["age_group"] = to_string(rec.attributes.age_group);
    attrs["hometown"] = rec.attributes.hometown;
    attrs["job"] = rec.attributes.job;

    ordered_json obj;
    obj["utt_id"] = rec.utt_id;
    obj["audio_path"] = rec.audio_path;
    obj["speaker_id"] = rec.speaker_id;
    obj["label"] = to_string(rec.label);
    obj["scenario"] = to_string(rec.scenario);
    obj["attributes"] = attrs;
    obj["duration_s"] = rec.duration_s;
    return obj;
}

} // namespace

Manifest load_manifest(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open manifest: " + path.string());
    }

    Manifest m;
    std::map<std::string, std::size_t> seen; // utt_id -> first line
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) {
            line_error(path, line_no, "empty line");
        }
        UtteranceRecord rec = parse_record(line, path, line_no);
        auto [it, inserted] = seen.emplace(rec.utt_id, line_no);
        if (!inserted) {
            std::ostringstream msg;
            msg << "duplicate utt_id '" << rec.utt_id << "' (first seen on line " << it->second
                << ")";
            line_error(path, line_no, msg.str());
        }
        m.records.push_back(std::move(rec));
    }
    if (in.bad()) {
        throw IoError("read failure on manifest: " + path.string());
    }
    return m;
}

void save_manifest(const Manifest& m, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write manifest: " + path.string());
    }
    for (const auto& rec : m.records) {
        out << record_to_json(rec).dump() << '\n';
    }
    out.flush();
    if (!out) {
        throw IoError("write failure on manifest: " + path.string());
    }
}

std::vector<std::string> validate(const Manifest& m) {
    std::vector<std::string> violations;
    std::map<std::string, std::size_t> counts;
    for (const auto& rec : m.records) {
        const std::string who = rec.utt_id.empty() ? "<unnamed record>" : rec.utt_id;
        if (rec.utt_id.empty()) {
            violations.push_back(who + ": utt_id is empty");
        }
        if (rec.audio_path.empty()) {
            violations.push_back(who + ": audio_path is empty");
        }
        if (rec.speaker_id.empty()) {
            violations.push_back(who + ": speaker_id is empty");
        }
        if (rec.attributes.hometown.empty()) {
            violations.push_back(who + ": attributes.hometown is empty (use \"unknown\")");
        }
        if (rec.attributes.job.empty()) {
            violations.push_back(who + ": attributes.job is empty (use \"unknown\")");
        }
        if (!(rec.duration_s >= 0.0) || !std::isfinite(rec.duration_s)) {
            violations.push_back(who + ": duration_s must be a finite nonnegative number");
        }
        counts[rec.utt_id] += 1;
    }
    for (const auto& [id, n] : counts) {
        if (n > 1 && !id.empty()) {
            violations.push_back(id + ": utt_id appears " + std::to_string(n) + " times");
        }
    }
    return violations;
}

namespace {

struct SpeakerBucket {
    std::string speaker_id;
    std::size_t utt_count = 0;
};

} // namespace

SplitResult stratified_split(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed,
                             const std::set<Scenario>& unseen_scenarios) {
    (void)seed; // greedy assignment is fully deterministic
    if (m.records.empty()) {
        throw ConfigError("cannot split an empty manifest");
    }
    const double weight_sum = ratios.train + ratios.dev + ratios.test;
    if (!(ratios.train >= 0.0 && ratios.dev >= 0.0 && ratios.test >= 0.0) || weight_sum <= 0.0) {
        throw ConfigError("split ratios must be nonnegative and not all zero");
    }
    const double fraction[3] = {ratios.train / weight_sum, ratios.dev / weight_sum,
                                ratios.test / weight_sum};

    SplitResult result;

    // Stratum key -> speaker -> utterance count, over in-scenario records only.
    std::map<std::pair<AgeGroup, Gender>, std::map<std::string, std::size_t>> strata;
    for (const auto& rec : m.records) {
        if (unseen_scenarios.count(rec.scenario)) continue;
        strata[{rec.attributes.age_group, rec.attributes.gender}][rec.speaker_id] += 1;
    }

    // 0 = train, 1 = dev, 2 = test; ties go to the earlier split.
    std::map<std::string, int> assignment;
    for (const auto& [key, speakers] : strata) {
        (void)key;
        std::vector<SpeakerBucket> order;
        std::size_t stratum_total = 0;
        for (const auto& [spk, count] : speakers) {
            order.push_back({spk, count});
            stratum_total += count;
        }
        std::sort(order.begin(), order.end(), [](const SpeakerBucket& a, const SpeakerBucket& b) {
            if (a.utt_count != b.utt_count) return a.utt_count > b.utt_count;
            return a.speaker_id < b.speaker_id;
        });

        double assigned[3] = {0.0, 0.0, 0.0};
        for (const auto& spk : order) {
            int best = 0;
            double best_deficit = fraction[0] * static_cast<double>(stratum_total) - assigned[0];
            for (int split = 1; split < 3; ++split) {
                const double deficit =
                    fraction[split] * static_cast<double>(stratum_total) - assigned[split];
                if (deficit > best_deficit) {
                    best = split;
                    best_deficit = deficit;
                }
            }
            assignment[spk.speaker_id] = best;
            assigned[best] += static_cast<double>(spk.utt_count);
        }
    }

    for (const auto& rec : m.records) {
        if (unseen_scenarios.count(rec.scenario)) {
            result.unseen.records.push_back(rec);
            continue;
        }
        switch (assignment.at(rec.speaker_id)) {
            case 0: result.train.records.push_back(rec); break;
            case 1: result.dev.records.push_back(rec); break;
            default: result.test.records.push_back(rec); break;
        }
    }
    return result;
}

SplitResult stratified_split(const Manifest& m, const SplitRatios& ratios, std::uint64_t seed) {
    return stratified_split(m, ratios, seed, kDefaultUnseenScenarios);
}

} // namespace ipad
