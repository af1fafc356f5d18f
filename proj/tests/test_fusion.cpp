#include "ccm/error.hpp"
#include "ccm/model/fusion.hpp"

#include "doctest.h"
#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

using namespace ccm;
using namespace ccm::model;

namespace {

GaussianExpert expert(std::vector<double> m, std::vector<double> v) { return {std::move(m), std::move(v)}; }

FusionModel tiny_model()
{
    const auto& data = test::tiny_dataset();
    return FusionModel(test::tiny_config().model, data.stats.robot_mask);
}

} // namespace

TEST_CASE("fuse_poe hand examples")
{
    auto a = fuse_poe({expert({0}, {1})});
    CHECK(a.mean[0] == 0.0);
    CHECK(a.variance[0] == 0.5);

    auto b = fuse_poe({expert({1}, {1}), expert({3}, {1})});
    CHECK(b.mean[0] == doctest::Approx(4.0 / 3.0).epsilon(1e-15));
    CHECK(b.variance[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

    auto c = fuse_poe({expert({2}, {0.5}), expert({-1}, {2})});
    CHECK(c.mean[0] == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(c.variance[0] == doctest::Approx(1.0 / 3.5).epsilon(1e-15));
}

TEST_CASE("fuse_poe rejects empty lists and bad variances")
{
    CHECK_THROWS_AS(fuse_poe({}), ContractError);
    CHECK_THROWS_AS(fuse_poe({expert({0}, {0})}), ContractError);
    CHECK_THROWS_AS(fuse_poe({expert({0}, {1}), expert({0, 1}, {1, 1})}), DimensionError);
}

TEST_CASE("fuse_poe properties on random expert sets")
{
    std::mt19937_64 rng(17);
    for (int s = 0; s < 300; ++s) {
        const std::size_t n = 1 + rng() % 4;
        const std::size_t d = 1 + rng() % 8;
        std::vector<GaussianExpert> experts;
        for (std::size_t i = 0; i < n; ++i) {
            auto lv = test::uniform(rng, d, -4, 2);
            for (auto& v : lv) {
                v = std::exp(v);
            }
            experts.push_back(expert(test::uniform(rng, d, -3, 3), lv));
        }
        const auto fused = fuse_poe(experts);

        auto shuffled = experts;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        const auto again = fuse_poe(shuffled);
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(std::abs(again.mean[j] - fused.mean[j]) <= 1e-12);
            CHECK(std::abs(again.variance[j] - fused.variance[j]) <= 1e-12);
            double min_var = 1.0;
            for (const auto& e : experts) {
                min_var = std::min(min_var, e.variance[j]);
            }
            CHECK(fused.variance[j] < min_var);
        }

        // An expert at the variance clamp (logvar 8) barely moves the mean.
        auto wider = experts;
        wider.push_back(expert(test::uniform(rng, d, -3, 3), std::vector<double>(d, std::exp(8.0))));
        const auto near = fuse_poe(wider);
        for (std::size_t j = 0; j < d; ++j) {
            CHECK(std::abs(near.mean[j] - fused.mean[j]) <= 1e-3 * std::max(1.0, std::abs(fused.mean[j])));
        }

        // Every nonempty subset fuses.
        for (unsigned mask = 1; mask < (1u << n); ++mask) {
            std::vector<GaussianExpert> sub;
            for (std::size_t i = 0; i < n; ++i) {
                if (mask & (1u << i)) {
                    sub.push_back(experts[i]);
                }
            }
            const auto f = fuse_poe(sub);
            CHECK(f.mean.size() == d);
        }
    }
}

TEST_CASE("reparameterize: zero variance, determinism, moments")
{
    LatentCode zero{{1.5, -2.0}, {0.0, 0.0}, std::nullopt, {}};
    CHECK(*reparameterize(zero, 3).sample == zero.mean);

    LatentCode code{{0.7}, {2.0}, std::nullopt, {}};
    CHECK(*reparameterize(code, 9).sample == *reparameterize(code, 9).sample);

    constexpr int n = 100000;
    double sum = 0;
    double sq = 0;
    for (int i = 0; i < n; ++i) {
        const double x = (*reparameterize(code, static_cast<std::uint64_t>(i)).sample)[0];
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean - 0.7) < 3 * std::sqrt(2.0 / n));
    // standard error of the sample variance of a Gaussian: var * sqrt(2 / (n - 1))
    CHECK(std::abs(var - 2.0) < 3 * 2.0 * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("modality sets and names")
{
    CHECK(ModalitySet::all_but(Modality::rgb).to_string() == "{depth,force,proprio}");
    CHECK(ModalitySet::all().size() == 4);
    CHECK(parse_modality("image") == Modality::rgb);
    CHECK_THROWS_AS(parse_modality("sound"), ContractError);
}

TEST_CASE("tensor fusion needs proprio")
{
    ExpertSet e;
    for (auto& x : e) {
        x.mean = nx::Tensor::zeros({1, 2});
        x.logvar = nx::Tensor::zeros({1, 2});
    }
    ModalitySet s = ModalitySet::all_but(Modality::proprio);
    CHECK_THROWS_AS(fuse(e, s), ContractError);
    CHECK(fuse(e, ModalitySet::all()).variance.at(0) == doctest::Approx(0.2));
}

TEST_CASE("encoders: determinism, clamp, sensitivity")
{
    const FusionModel m = tiny_model();
    const auto& f = test::tiny_dataset().train.frames[3];
    const auto a = m.encode_modality(Modality::depth, f.obs.depth);
    const auto b = m.encode_modality(Modality::depth, f.obs.depth);
    CHECK(a.mean == b.mean);
    CHECK(a.variance == b.variance);

    std::mt19937_64 rng(2);
    for (int i = 0; i < 20; ++i) {
        const auto x = test::uniform(rng, FusionModel::input_size(Modality::rgb), -50, 50);
        const auto e = m.encode_modality(Modality::rgb, x);
        for (double v : e.variance) {
            CHECK(v >= std::exp(-8.0) * (1 - 1e-12));
            CHECK(v <= std::exp(8.0) * (1 + 1e-12));
        }
    }
    auto x = f.obs.proprio;
    x[0] += 1e-3;
    CHECK(m.encode_modality(Modality::proprio, x).mean != m.encode_modality(Modality::proprio, f.obs.proprio).mean);
}

TEST_CASE("decoder and head shapes")
{
    const FusionModel m = tiny_model();
    const std::vector<double> z(m.latent_dim(), 0.3);
    const std::size_t mask = m.mask_pixels().size();
    CHECK(m.decode_modality(z, Modality::rgb).full.size() == 3 * 1024);
    CHECK(m.decode_modality(z, Modality::rgb).masked.size() == 3 * 1024);
    CHECK(m.decode_modality(z, Modality::depth).full.size() == 1024);
    CHECK(m.decode_modality(z, Modality::force).full.size() == 32 * 3);
    CHECK(FusionModel::input_size(Modality::force) == 32 * 6);
    CHECK(m.decode_modality(z, Modality::proprio).full.size() == 6);
    CHECK(m.decode_modality(z, Modality::depth).full == m.decode_modality(z, Modality::depth).full);

    const auto flow = m.predict_flow_raster(z, std::vector<double>{0.01, 0, 0});
    CHECK(flow.flow.size() == 2 * 1024);
    CHECK(flow.mask_logits.size() == 1024);

    const nx::Tensor zt({2, m.latent_dim()}, std::vector<double>(2 * m.latent_dim(), 0.1));
    const nx::Tensor act({2, 3}, {0.01, 0, 0, 0, 0.02, -0.01});
    CHECK(m.predict_flow(zt, act).flow.shape() == nx::Shape{2, 2 * mask});
    CHECK(m.predict_ee(zt, act).shape() == nx::Shape{2, 3});
    const auto contact = nx::sigmoid(m.predict_contact(zt, act));
    CHECK(contact.shape() == nx::Shape{2, 1});
    for (double p : contact.data()) {
        CHECK((p > 0.0 && p < 1.0));
    }
    CHECK(m.predict_pairing(zt).shape() == nx::Shape{2, 1});
}

TEST_CASE("zero_force model ignores the force input")
{
    const auto& data = test::tiny_dataset();
    const FusionModel m(test::tiny_config().model, data.stats.robot_mask, true);
    const auto& obs = data.train.frames[0].obs;
    auto other = obs.force;
    for (auto& v : other) {
        v = -v;
    }
    CHECK(m.encode_modality(Modality::force, obs.force).mean == m.encode_modality(Modality::force, other).mean);
}

TEST_CASE("checkpoint round trip")
{
    const auto& data = test::tiny_dataset();
    const Config cfg = test::tiny_config();
    FusionModel m(cfg.model, data.stats.robot_mask);
    m.set_input_standardization(Modality::depth, fit_standardization(data.train, Modality::depth, 0.1));
    const auto dir = std::filesystem::temp_directory_path() / "ccm_test_ckpt";
    std::filesystem::remove_all(dir);
    save_checkpoint(dir, m, cfg, data.stats);
    const Checkpoint back = load_checkpoint(dir);
    CHECK(back.model.flat_parameters() == m.flat_parameters());
    CHECK(back.model.input_standardization(Modality::depth).scale == m.input_standardization(Modality::depth).scale);
    CHECK(back.model.input_standardization(Modality::rgb).shift.empty());
    const auto& obs = data.val.frames[0].obs;
    CHECK(back.model.encode_modality(Modality::depth, obs.depth).mean ==
          m.encode_modality(Modality::depth, obs.depth).mean);
    CHECK(back.config.hash() == cfg.hash());
    CHECK(back.stats.robot_mask == data.stats.robot_mask);
    std::filesystem::remove_all(dir);
    CHECK_THROWS_AS(load_checkpoint(dir), ContractError);
}

TEST_CASE("input standardization")
{
    const auto& data = test::tiny_dataset();
    const auto st = fit_standardization(data.train, Modality::depth, 0.1);
    REQUIRE(st.shift.size() == sim::kPixels);
    // Two-pass oracle for one pixel that varies and one background pixel.
    for (std::size_t px : {std::size_t{0}, std::size_t{16 * 32 + 16}}) {
        double mean = 0.0;
        for (const auto& f : data.train.frames) {
            mean += f.obs.depth[px];
        }
        mean /= static_cast<double>(data.train.size());
        double var = 0.0;
        for (const auto& f : data.train.frames) {
            var += (f.obs.depth[px] - mean) * (f.obs.depth[px] - mean);
        }
        var /= static_cast<double>(data.train.size());
        CHECK(st.shift[px] == doctest::Approx(mean).epsilon(1e-12));
        CHECK(st.scale[px] == doctest::Approx(1.0 / std::max(std::sqrt(var), 0.1)).epsilon(1e-9));
    }

    // Folding the affine into the inputs by hand gives the same expert.
    FusionModel a(test::tiny_config().model, data.stats.robot_mask);
    const FusionModel b(test::tiny_config().model, data.stats.robot_mask);
    a.set_input_standardization(Modality::depth, st);
    auto x = data.val.frames[0].obs.depth;
    const auto ea = a.encode_modality(Modality::depth, x);
    for (std::size_t i = 0; i < x.size(); ++i) {
        x[i] = (x[i] - st.shift[i]) * st.scale[i];
    }
    CHECK(ea.mean == b.encode_modality(Modality::depth, x).mean);

    CHECK_THROWS_AS(a.set_input_standardization(Modality::rgb, st), DimensionError);
    auto bad = st;
    bad.scale[3] = 0.0;
    CHECK_THROWS_AS(a.set_input_standardization(Modality::depth, bad), ContractError);
    CHECK_THROWS_AS(fit_standardization(sim::Split{}, Modality::rgb, 0.1), ContractError);
}
