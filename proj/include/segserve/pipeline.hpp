#pragma once

#include "segserve/fusion.hpp"
#include "segserve/orchestrator.hpp"
#include "segserve/random.hpp"
#include "segserve/segmentation.hpp"

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace segserve {

inline constexpr std::size_t kDefaultFeatureDim = 1000;

// One FusionWeights per strategy.
struct WeightBank {
    FusionWeights concat;
    FusionWeights feature_weighted;
    FusionWeights score_weighted;
    std::vector<std::string> class_names = default_class_names();

    const FusionWeights& get(FusionStrategy strategy) const;
    void set(FusionWeights weights);

    // Every strategy generated from the projection seed.
    static WeightBank generated(std::size_t class_count = 3, std::size_t feature_dim = kDefaultFeatureDim,
                                std::uint64_t seed = kProjectionSeed);
};

// Worker pipeline keyed on task category.
//  - segmentation categories: input_ref is an image or MIV1 file; produces
//    mask.pgm or mask.miv via segment_bytes().
//  - dual_modal: input_ref is a directory holding `image_f` and `image_o`
//    (PNG/PGM/PPM) and optionally `params.json` {"strategy", "lambda"};
//    produces diagnosis.json.
TaskRunner make_default_runner(SegmentOptions segment_options, WeightBank weights);

std::string artifact_name_for(FileFormat format);

} // namespace segserve
