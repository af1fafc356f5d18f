#include "ccm/corruption/corruption.hpp"
#include "ccm/detector/suite.hpp"
#include "ccm/error.hpp"
#include "ccm/pipeline/pipeline.hpp"

#include "doctest.h"
#include "support.hpp"

using namespace ccm;
using namespace ccm::pipeline;
using model::Modality;
using model::ModalitySet;

namespace {

const model::FusionModel& tiny_model()
{
    static const model::FusionModel m(test::tiny_config().model, test::tiny_dataset().stats.robot_mask);
    return m;
}

/// Thresholds at the clean-score median so that both outcomes occur.
detector::ThresholdTable median_table()
{
    const auto scores = detector::score_split(test::tiny_dataset().val, tiny_model());
    auto median = [&](const std::string& ch) {
        auto v = detector::channel(scores, ch);
        std::sort(v.begin(), v.end());
        return v[v.size() / 2];
    };
    detector::ThresholdTable t;
    t.calibrated = true;
    t.rgb = median("rgb");
    t.depth = median("depth");
    t.force = {median("force0"), median("force1"), median("force2")};
    t.rgb_stats = detector::mean_std(detector::channel(scores, "rgb"));
    t.depth_stats = detector::mean_std(detector::channel(scores, "depth"));
    for (std::size_t k = 0; k < 3; ++k) {
        t.force_stats[k] = detector::mean_std(detector::channel(scores, "force" + std::to_string(k)));
    }
    return t;
}

} // namespace

TEST_CASE("encode_with_missing: identity, subsets, proprio")
{
    const auto& obs = test::tiny_dataset().val.frames[1].obs;
    const auto& m = tiny_model();
    const auto full = encode_with_missing(obs, m, std::nullopt);
    CHECK(full.fused_modalities == ModalitySet::all());
    const auto fused = m.encode_fuse(model::stack_inputs(std::vector<const sim::Observation*>{&obs}));
    CHECK(full.mean == std::vector<double>(fused.mean.data().begin(), fused.mean.data().end()));

    const auto no_rgb = encode_with_missing(obs, m, Modality::rgb);
    CHECK(no_rgb.fused_modalities.to_string() == "{depth,force,proprio}");
    CHECK(no_rgb.mean != full.mean);
    CHECK_THROWS_AS(encode_with_missing(obs, m, Modality::proprio), ContractError);
}

TEST_CASE("composition law: compensate equals encode_with_missing of the rejection")
{
    const auto table = median_table();
    const auto& data = test::tiny_dataset();
    const auto ctx = corruption::make_context(data.stats);
    Rng rng(3);
    int rejections = 0;
    for (std::size_t i = 0; i < data.val.size(); i += 3) {
        sim::Observation obs = data.val.frames[i].obs;
        if (i % 2 == 0) {
            const auto spec = corruption::sample_spec(model::kDroppable[i % 3], rng, CorruptionConfig{});
            obs = corruption::apply(spec, obs, ctx);
        }
        const auto c = compensate(obs, tiny_model(), table, Mode::detect_correct);
        const auto d = detector::detect(obs, tiny_model(), table);
        const auto ref = encode_with_missing(obs, tiny_model(), d.rejected);
        CHECK(c.code.mean == ref.mean);
        CHECK(c.code.variance == ref.variance);
        CHECK(c.code.fused_modalities == ref.fused_modalities);
        rejections += d.rejected ? 1 : 0;
    }
    CHECK(rejections > 0);
}

TEST_CASE("full and no_correct never act on detections")
{
    const auto table = median_table();
    for (const auto& f : test::tiny_dataset().val.frames) {
        const auto full = compensate(f.obs, tiny_model(), table, Mode::full);
        const auto same = compensate(f.obs, tiny_model(), table, Mode::no_correct);
        CHECK(full.code.fused_modalities == ModalitySet::all());
        CHECK(full.code.mean == same.code.mean);
        CHECK(full.detection.to_json() == same.detection.to_json());
    }
    CHECK_THROWS_AS(compensate(test::tiny_dataset().val.frames[0].obs, tiny_model(), detector::ThresholdTable{},
                               Mode::detect_correct),
                    ContractError);
}

TEST_CASE("batched compensation agrees with the single-frame path")
{
    const auto table = median_table();
    std::vector<const sim::Observation*> obs;
    for (const auto& f : test::tiny_dataset().val.frames) {
        obs.push_back(&f.obs);
    }
    const auto batch = compensate_batch(obs, tiny_model(), table, Mode::detect_correct);
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const auto one = compensate(*obs[i], tiny_model(), table, Mode::detect_correct);
        CHECK(batch[i].detection.rejected == one.detection.rejected);
        CHECK(batch[i].code.fused_modalities == one.code.fused_modalities);
        for (std::size_t j = 0; j < one.code.mean.size(); ++j) {
            CHECK(batch[i].code.mean[j] == doctest::Approx(one.code.mean[j]).epsilon(1e-10));
        }
    }
}

TEST_CASE("latent shift report")
{
    const auto rows = latent_shift(test::tiny_dataset().test, tiny_model());
    REQUIRE(rows.size() == 3);
    for (const auto& r : rows) {
        CHECK(std::isfinite(r.mean_l2));
        CHECK(r.mean_l2 > 0.0);
    }
    CHECK(latent_shift_csv(rows, "h", 1).starts_with("# config_hash=h seed=1\ndropped_modality,mean_l2"));
}
