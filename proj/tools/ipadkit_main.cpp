#include <cstdio>
#include <exception>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "ipad/errors.hpp"
#include "ipad/pipeline.hpp"

namespace {

using ipad::PipelineConfig;

ipad::SplitRatios parse_ratios(const std::string& text) {
    ipad::SplitRatios ratios;
    double parts[3];
    std::size_t start = 0;
    for (int i = 0; i < 3; ++i) {
        const std::size_t colon = text.find(':', start);
        const bool last = i == 2;
        if ((last && colon != std::string::npos) || (!last && colon == std::string::npos)) {
            throw ipad::ConfigError("ratios must look like '3:2:5', got '" + text + "'");
        }
        const std::string part = text.substr(start, last ? std::string::npos : colon - start);
        try {
            parts[i] = std::stod(part);
        } catch (const std::exception&) {
            throw ipad::ConfigError("invalid ratio component '" + part + "' in '" + text + "'");
        }
        start = colon + 1;
    }
    ratios.train = parts[0];
    ratios.dev = parts[1];
    ratios.test = parts[2];
    return ratios;
}

struct GlobalOptions {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

PipelineConfig make_config(const GlobalOptions& opts) {
    PipelineConfig cfg;
    if (!opts.config_path.empty()) {
        cfg = ipad::load_pipeline_config(opts.config_path);
    }
    if (opts.seed) {
        cfg.seed = *opts.seed;
    }
    return cfg;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Impersonation audio detection toolkit"};
    app.require_subcommand(1);

    GlobalOptions global;
    app.add_option("--config", global.config_path, "Pipeline configuration file (JSON)");
    app.add_option("--seed", global.seed, "Override the configured seed");
    app.add_option("--out", global.out, "Override the command's output path or directory");

    auto* synthgen = app.add_subcommand("synthgen", "Generate the synthetic corpus");

    std::string split_manifest;
    std::string split_ratios = "3:2:5";
    auto* split = app.add_subcommand("split", "Stratified speaker-disjoint split");
    split->add_option("manifest", split_manifest, "Input manifest")->required();
    split->add_option("--ratios", split_ratios, "train:dev:test utterance ratios");

    std::string features_manifest;
    auto* features = app.add_subcommand("features", "Extract cepstral features");
    features->add_option("manifest", features_manifest, "Input manifest")->required();

    std::string enc_manifest;
    auto* train_encoders =
        app.add_subcommand("train-encoders", "Train one attribute encoder per attribute");
    train_encoders->add_option("train_manifest", enc_manifest, "Training manifest")->required();

    std::string det_train_manifest;
    std::string det_dev_manifest;
    bool with_profiles = true;
    auto* train_detector = app.add_subcommand("train-detector", "Train the classifier");
    train_detector->add_option("train_manifest", det_train_manifest, "Training manifest")
        ->required();
    train_detector->add_option("dev_manifest", det_dev_manifest, "Development manifest")
        ->required();
    train_detector->add_flag("--with-profiles,!--no-profiles", with_profiles,
                             "Fuse speaker profiles into the features (default on)");

    std::string score_manifest;
    auto* score = app.add_subcommand("score", "Score a manifest with the trained detector");
    score->add_option("manifest", score_manifest, "Manifest to score")->required();

    std::string eval_scores;
    std::string eval_manifest;
    std::string det_points_path;
    auto* evaluate = app.add_subcommand("evaluate", "Compute the EER report from a score file");
    evaluate->add_option("scores", eval_scores, "Score file (utt_id<TAB>score)")->required();
    evaluate->add_option("manifest", eval_manifest, "Manifest providing the labels")->required();
    evaluate->add_option("--det", det_points_path, "Also write DET curve points here");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) {
            return app.exit(e); // --help
        }
        (void)app.exit(e);
        return 2;
    }

    try {
        PipelineConfig cfg = make_config(global);

        if (synthgen->parsed()) {
            if (global.out) cfg.paths.corpus_dir = *global.out;
            const ipad::Manifest m = ipad::cmd_synthgen(cfg);
            std::printf("wrote %zu records under %s\n", m.records.size(),
                        cfg.paths.corpus_dir.string().c_str());
        } else if (split->parsed()) {
            ipad::SplitRatios ratios = cfg.split.ratios;
            if (split->count("--ratios") > 0) ratios = parse_ratios(split_ratios);
            std::optional<std::filesystem::path> out_dir;
            if (global.out) out_dir = *global.out;
            const ipad::SplitResult result = ipad::cmd_split(
                split_manifest, ratios, cfg.seed, cfg.split.unseen_scenarios, out_dir);
            std::printf("train=%zu dev=%zu test=%zu unseen=%zu\n", result.train.records.size(),
                        result.dev.records.size(), result.test.records.size(),
                        result.unseen.records.size());
        } else if (features->parsed()) {
            if (global.out) cfg.paths.feature_dir = *global.out;
            ipad::cmd_features(features_manifest, cfg);
            std::printf("features written to %s\n", cfg.paths.feature_dir.string().c_str());
        } else if (train_encoders->parsed()) {
            if (global.out) cfg.paths.model_dir = *global.out;
            ipad::cmd_train_encoders(enc_manifest, cfg);
            std::printf("trained %zu attribute encoders into %s\n", cfg.attributes.size(),
                        (cfg.paths.model_dir / "encoders").string().c_str());
        } else if (train_detector->parsed()) {
            if (global.out) cfg.paths.model_dir = *global.out;
            const ipad::DetectorSummary summary = ipad::cmd_train_detector(
                det_train_manifest, det_dev_manifest, cfg, with_profiles);
            std::printf("detector saved (f=%zu l=%zu); best dev EER %.4f at epoch %zu\n",
                        summary.feature_dim, summary.profile_dim, summary.best_dev_eer,
                        summary.best_epoch + 1);
        } else if (score->parsed()) {
            if (global.out) cfg.paths.score_path = *global.out;
            const auto scores = ipad::cmd_score(score_manifest, cfg);
            std::printf("wrote %zu scores to %s\n", scores.size(),
                        cfg.paths.score_path.string().c_str());
        } else if (evaluate->parsed()) {
            if (global.out) cfg.paths.report_path = *global.out;
            std::optional<std::filesystem::path> det;
            if (!det_points_path.empty()) det = det_points_path;
            const ipad::EvalReport report = ipad::cmd_evaluate(eval_scores, eval_manifest, cfg, det);
            std::printf("eer=%.6f threshold=%.6g (p_fa=%.6f p_miss=%.6f, %zu genuine / %zu fake)\n",
                        report.eer, report.threshold, report.p_fa, report.p_miss,
                        report.n_genuine, report.n_fake);
        }
        return 0;
    } catch (const ipad::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const ipad::FormatError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
