#include "ccm/corruption/corruption.hpp"
#include "ccm/error.hpp"

#include "doctest.h"
#include "support.hpp"

#include <set>

using namespace ccm;
using namespace ccm::corruption;
using model::Modality;

namespace {

const sim::Observation& sample_obs() { return test::tiny_dataset().train.frames[10].obs; }

ApplyContext ctx() { return make_context(test::tiny_dataset().stats); }

void check_untouched(const sim::Observation& a, const sim::Observation& b, Modality target)
{
    if (target != Modality::rgb) {
        CHECK(a.rgb == b.rgb);
    }
    if (target != Modality::depth) {
        CHECK(a.depth == b.depth);
    }
    if (target != Modality::force) {
        CHECK(a.force == b.force);
    }
    CHECK(a.proprio == b.proprio);
    CHECK(a.action == b.action);
}

void check_ranges(const sim::Observation& o)
{
    for (double v : o.rgb) {
        CHECK((v >= 0.0 && v <= 1.0));
    }
    for (double v : o.depth) {
        CHECK((v >= 0.0 && v <= 1.0));
    }
    for (double v : o.force) {
        CHECK((v >= -1.0 && v <= 1.0));
    }
}

} // namespace

TEST_CASE("legality table")
{
    CHECK(legal(Modality::rgb, Kind::brightness));
    CHECK_FALSE(legal(Modality::depth, Kind::brightness));
    CHECK_FALSE(legal(Modality::force, Kind::rotation));
    CHECK(legal(Modality::force, Kind::blackout_force));
    CHECK_THROWS_AS(legal_kinds(Modality::proprio), ContractError);
    CorruptionSpec bad;
    bad.modality = Modality::force;
    bad.kind = Kind::rotation;
    CHECK_THROWS_AS(apply(bad, sample_obs(), ctx()), ContractError);
}

TEST_CASE("sampling covers the legal kinds and is seed-determined")
{
    const CorruptionConfig cfg;
    Rng rng(1);
    std::set<Kind> seen;
    for (int i = 0; i < 10000; ++i) {
        seen.insert(sample_spec(Modality::rgb, rng, cfg).kind);
    }
    CHECK(seen == std::set<Kind>{Kind::box_occlusion, Kind::brightness, Kind::rotation});
    for (int i = 0; i < 1000; ++i) {
        const auto s = sample_spec(Modality::force, rng, cfg);
        CHECK(s.kind != Kind::rotation);
        if (s.kind == Kind::gauss_noise) {
            CHECK((s.noise_variance == 0.5 || s.noise_variance == 0.25 || s.noise_variance == 0.1));
        }
    }
    for (int i = 0; i < 1000; ++i) {
        const auto s = sample_spec(Modality::depth, rng, cfg);
        if (s.kind == Kind::box_occlusion) {
            CHECK((s.box_side >= 7 && s.box_side <= 15));
            CHECK((std::abs(s.box_dx) <= 6 && std::abs(s.box_dy) <= 6));
        } else {
            CHECK(std::abs(s.angle_deg) >= 10.0);
            CHECK(std::abs(s.angle_deg) <= 30.0);
        }
    }
    Rng a(5);
    Rng b(5);
    CHECK(sample_spec(Modality::rgb, a, cfg).to_json() == sample_spec(Modality::rgb, b, cfg).to_json());
}

TEST_CASE("apply touches only the target, stays in range, is deterministic")
{
    const CorruptionConfig cfg;
    Rng rng(3);
    for (int i = 0; i < 200; ++i) {
        const Modality m = model::kDroppable[static_cast<std::size_t>(i % 3)];
        const auto spec = sample_spec(m, rng, cfg);
        const auto out = apply(spec, sample_obs(), ctx());
        check_untouched(out, sample_obs(), m);
        check_ranges(out);
        const auto again = apply(spec, sample_obs(), ctx());
        CHECK(again.rgb == out.rgb);
        CHECK(again.depth == out.depth);
        CHECK(again.force == out.force);
    }
}

TEST_CASE("blackout fills the window with the encoded zero wrench")
{
    CorruptionSpec s;
    s.modality = Modality::force;
    s.kind = Kind::blackout_force;
    const auto out = apply(s, sample_obs(), ctx());
    std::set<double> distinct(out.force.begin(), out.force.end());
    CHECK(distinct.size() <= sim::kWrenchDims);
    const auto zero = test::tiny_dataset().stats.zero_wrench_encoding();
    for (std::size_t t = 0; t < sim::kForceSteps; ++t) {
        for (std::size_t k = 0; k < sim::kWrenchDims; ++k) {
            CHECK(out.force[t * sim::kWrenchDims + k] == zero[k]);
        }
    }
}

TEST_CASE("rotation by zero degrees is the identity")
{
    CorruptionSpec s;
    s.modality = Modality::depth;
    s.kind = Kind::rotation;
    s.angle_deg = 0.0;
    CHECK(apply(s, sample_obs(), ctx()).depth == sample_obs().depth);
    s.modality = Modality::rgb;
    CHECK(apply(s, sample_obs(), ctx()).rgb == sample_obs().rgb);
}

TEST_CASE("a fully in-frame 10px box zeroes exactly 100 pixels per channel")
{
    sim::Observation o = sample_obs();
    for (auto& v : o.rgb) {
        v = 0.5;
    }
    // one red peg pixel block centred at (15.5, 15.5)
    for (std::size_t r : {15u, 16u}) {
        for (std::size_t c : {15u, 16u}) {
            o.rgb[r * 32 + c] = 1.0;
            o.rgb[1024 + r * 32 + c] = 0.1;
        }
    }
    CorruptionSpec s;
    s.modality = Modality::rgb;
    s.kind = Kind::box_occlusion;
    s.box_side = 10;
    s.box_dx = 2;
    s.box_dy = -3;
    const auto out = apply(s, o, ctx());
    for (std::size_t ch = 0; ch < 3; ++ch) {
        int zeros = 0;
        for (std::size_t px = 0; px < 1024; ++px) {
            zeros += out.rgb[ch * 1024 + px] == 0.0 ? 1 : 0;
        }
        CHECK(zeros == 100);
    }
}

TEST_CASE("brightness scales and clamps")
{
    CorruptionSpec s;
    s.modality = Modality::rgb;
    s.kind = Kind::brightness;
    s.brightness = 0.8;
    const auto out = apply(s, sample_obs(), ctx());
    for (std::size_t i = 0; i < out.rgb.size(); ++i) {
        CHECK(out.rgb[i] == doctest::Approx(sample_obs().rgb[i] * 0.8));
    }
}

TEST_CASE("spec JSON round trip")
{
    Rng rng(8);
    for (int i = 0; i < 50; ++i) {
        const auto s = sample_spec(model::kDroppable[static_cast<std::size_t>(i % 3)], rng, CorruptionConfig{});
        CHECK(CorruptionSpec::from_json(s.to_json()).to_json() == s.to_json());
    }
    CHECK_THROWS_AS(CorruptionSpec::from_json("{\"modality\":\"force\",\"kind\":\"rotation\"}"), ContractError);
    CHECK_THROWS_AS(CorruptionSpec::from_json("not json"), ContractError);
}
