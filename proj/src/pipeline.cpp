#include "segserve/pipeline.hpp"

#include "segserve/error.hpp"

#include <json.hpp>

#include <optional>

namespace segserve {

const FusionWeights& WeightBank::get(FusionStrategy strategy) const {
    switch (strategy) {
    case FusionStrategy::Concat: return concat;
    case FusionStrategy::FeatureWeighted: return feature_weighted;
    case FusionStrategy::ScoreWeighted: return score_weighted;
    }
    fail(ErrorCode::InvalidInput, "unknown strategy");
}

void WeightBank::set(FusionWeights weights) {
    weights.validate();
    switch (weights.strategy) {
    case FusionStrategy::Concat: concat = std::move(weights); break;
    case FusionStrategy::FeatureWeighted: feature_weighted = std::move(weights); break;
    case FusionStrategy::ScoreWeighted: score_weighted = std::move(weights); break;
    }
}

WeightBank WeightBank::generated(std::size_t class_count, std::size_t feature_dim, std::uint64_t seed) {
    WeightBank bank;
    bank.concat = generate_weights(FusionStrategy::Concat, class_count, feature_dim, seed);
    bank.feature_weighted = generate_weights(FusionStrategy::FeatureWeighted, class_count, feature_dim, seed);
    bank.score_weighted = generate_weights(FusionStrategy::ScoreWeighted, class_count, feature_dim, seed);
    if (class_count != 3) {
        bank.class_names.clear();
        for (std::size_t i = 0; i < class_count; ++i) bank.class_names.push_back("class_" + std::to_string(i));
    }
    return bank;
}

std::string artifact_name_for(FileFormat format) {
    return format == FileFormat::Miv1 ? "mask.miv" : "mask.pgm";
}

namespace {

Artifact run_diagnosis(const std::filesystem::path& dir, const WeightBank& bank) {
    auto find_image = [&](const std::string& stem) {
        for (const char* ext : {"", ".png", ".pgm", ".ppm"}) {
            auto p = dir / (stem + ext);
            if (std::filesystem::is_regular_file(p)) return decode_image(read_file(p));
        }
        fail(ErrorCode::InvalidInput, "missing " + stem + " in " + dir.string());
    };

    FusionStrategy strategy = FusionStrategy::FeatureWeighted;
    std::optional<double> lambda;
    if (std::filesystem::is_regular_file(dir / "params.json")) {
        const Bytes raw = read_file(dir / "params.json");
        const auto j = nlohmann::json::parse(raw.begin(), raw.end(), nullptr, false);
        if (j.is_discarded() || !j.is_object()) fail(ErrorCode::InvalidInput, "malformed params.json");
        if (j.contains("strategy")) strategy = parse_strategy(j["strategy"].get<std::string>());
        if (j.contains("lambda")) lambda = j["lambda"].get<double>();
    }
    const FusionWeights& weights = bank.get(strategy);
    ModalPair pair{find_image("image_f"), find_image("image_o")};
    const Diagnosis d = diagnose(pair, weights, Lambda(lambda.value_or(weights.lambda)), bank.class_names);

    nlohmann::json out = {{"label", d.label.index},
                          {"name", d.label.name},
                          {"scores", std::vector<double>(d.scores.scores().begin(), d.scores.scores().end())},
                          {"strategy", to_string(strategy)}};
    const std::string text = out.dump();
    return {"diagnosis.json", Bytes(text.begin(), text.end())};
}

} // namespace

TaskRunner make_default_runner(SegmentOptions segment_options, WeightBank weights) {
    return [segment_options, bank = std::move(weights)](const TaskRecord& task) -> Artifact {
        if (task.category == TaskCategory::DualModal) return run_diagnosis(task.input_ref, bank);
        SegmentationArtifact a = segment_bytes(read_file(task.input_ref), segment_options);
        return {artifact_name_for(a.format), std::move(a.bytes)};
    };
}

} // namespace segserve
