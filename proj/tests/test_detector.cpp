#include "ccm/detector/detector.hpp"
#include "ccm/detector/suite.hpp"
#include "ccm/error.hpp"

#include "doctest.h"
#include "support.hpp"

#include <cmath>

using namespace ccm;
using namespace ccm::detector;
using model::Modality;

namespace {

/// Exhaustive pairwise count, ties 1/2.
double pairwise_auroc(const std::vector<double>& clean, const std::vector<double>& bad)
{
    std::uint64_t twice = 0;
    for (double k : bad) {
        for (double c : clean) {
            twice += k > c ? 2 : (k == c ? 1 : 0);
        }
    }
    return static_cast<double>(twice) / (2.0 * static_cast<double>(clean.size() * bad.size()));
}

ThresholdTable unit_table()
{
    ThresholdTable t;
    t.calibrated = true;
    t.rgb = 1.0;
    t.depth = 1.0;
    t.force = {0.5, 0.5, 0.5};
    return t;
}

} // namespace

TEST_CASE("auroc examples")
{
    CHECK(auroc(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9}) == 1.0);
    CHECK(auroc(std::vector<double>{0.5}, std::vector<double>{0.5}) == 0.5);
    CHECK(auroc(std::vector<double>{0.1, 0.4, 0.35}, std::vector<double>{0.3, 0.8}) ==
          doctest::Approx(4.0 / 6.0).epsilon(1e-15));
    CHECK_THROWS_AS(auroc(std::vector<double>{}, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("auroc equals exhaustive pairwise counting exactly")
{
    std::mt19937_64 rng(11);
    for (int s = 0; s < 200; ++s) {
        const std::size_t total = 2 + rng() % 49;
        const std::size_t nc = 1 + rng() % (total - 1);
        std::uniform_int_distribution<int> grid(0, 12);
        std::vector<double> clean(nc);
        std::vector<double> bad(total - nc);
        for (auto& v : clean) {
            v = grid(rng) / 4.0;
        }
        for (auto& v : bad) {
            v = grid(rng) / 4.0 + 0.5;
        }
        CHECK(auroc(clean, bad) == pairwise_auroc(clean, bad));
    }
}

TEST_CASE("auroc complement and monotone invariance")
{
    std::mt19937_64 rng(12);
    for (int s = 0; s < 100; ++s) {
        const auto a = test::uniform(rng, 1 + rng() % 30, 0, 1);
        const auto b = test::uniform(rng, 1 + rng() % 30, 0.2, 1.2);
        CHECK(auroc(a, b) + auroc(b, a) == doctest::Approx(1.0).epsilon(1e-15));
        std::vector<double> ta;
        std::vector<double> tb;
        for (double v : a) {
            ta.push_back(std::exp(3 * v) - 7);
        }
        for (double v : b) {
            tb.push_back(std::exp(3 * v) - 7);
        }
        CHECK(auroc(ta, tb) == auroc(a, b));
    }
}

TEST_CASE("youden threshold picks the midpoint of the best gap")
{
    const auto sep = youden_threshold(std::vector<double>{0.1, 0.2}, std::vector<double>{0.8, 0.9});
    CHECK(sep.threshold == doctest::Approx(0.5));
    CHECK(sep.youden_j == 1.0);

    const auto ex = youden_threshold(std::vector<double>{0.1, 0.4, 0.35}, std::vector<double>{0.3, 0.8});
    CHECK(ex.threshold > 0.4);
    CHECK(ex.threshold < 0.8);
    CHECK(ex.youden_j == doctest::Approx(0.5));

    // enumerate every cut by hand and compare the best J
    std::mt19937_64 rng(4);
    for (int s = 0; s < 100; ++s) {
        const auto c = test::uniform(rng, 1 + rng() % 20, 0, 1);
        const auto k = test::uniform(rng, 1 + rng() % 20, 0.3, 1.3);
        double best = -2;
        std::vector<double> cuts{-1e9};
        for (double v : c) {
            cuts.push_back(v);
        }
        for (double v : k) {
            cuts.push_back(v);
        }
        for (double t : cuts) {
            double tp = 0;
            double fp = 0;
            for (double v : k) {
                tp += v > t;
            }
            for (double v : c) {
                fp += v > t;
            }
            best = std::max(best, tp / k.size() - fp / c.size());
        }
        CHECK(youden_threshold(c, k).youden_j == doctest::Approx(best).epsilon(1e-12));
    }
    CHECK_THROWS_AS(youden_threshold(std::vector<double>{}, std::vector<double>{1.0}), ContractError);
}

TEST_CASE("detection rule examples")
{
    auto t = unit_table();
    Scores s;
    s.force = {0.9, 0.2, 0.8};
    auto r = detect(s, t);
    CHECK(r.force_flag);
    CHECK(r.rejected == Modality::force);

    t.rgb_stats = {0.0, 1.0};
    t.depth_stats = {0.0, 1.0};
    s = {};
    s.rgb = 3.2;
    s.depth = 5.0;
    r = detect(s, t);
    CHECK(*r.rgb_z == 3.2);
    CHECK(*r.depth_z == 5.0);
    CHECK(r.rejected == Modality::depth);

    s = {};
    r = detect(s, t);
    CHECK_FALSE(r.rejected);
    CHECK_FALSE(r.rgb_z);

    ThresholdTable raw;
    CHECK_THROWS_AS(detect(s, raw), ContractError);
}

TEST_CASE("force z-score is the max over flagged dims")
{
    auto t = unit_table();
    t.force_stats = {ChannelStats{0.0, 1.0}, ChannelStats{0.0, 0.1}, ChannelStats{0.0, 1.0}};
    t.rgb_stats = {0.0, 1.0};
    Scores s;
    s.force = {0.6, 0.7, 0.1};
    s.rgb = 5.0;
    const auto r = detect(s, t);
    CHECK(*r.force_z == doctest::Approx(7.0));
    CHECK(r.rejected == Modality::force);
}

TEST_CASE("detect is deterministic and rejects a flagged modality or nothing")
{
    std::mt19937_64 rng(21);
    ThresholdTable t = unit_table();
    t.rgb_stats = {0.5, 0.3};
    t.depth_stats = {0.7, 0.2};
    t.force_stats = {ChannelStats{0.2, 0.1}, ChannelStats{0.3, 0.2}, ChannelStats{0.1, 0.05}};
    for (int i = 0; i < 2000; ++i) {
        Scores s;
        const auto v = test::uniform(rng, 5, 0, 2);
        s.rgb = v[0];
        s.depth = v[1];
        s.force = {v[2] / 2, v[3] / 2, v[4] / 2};
        const auto a = detect(s, t);
        const auto b = detect(s, t);
        CHECK(a.to_json() == b.to_json());
        if (a.rejected) {
            CHECK(a.flagged(*a.rejected));
        } else {
            CHECK_FALSE((a.rgb_flag || a.depth_flag || a.force_flag));
        }
    }
}

TEST_CASE("calibrate: thresholds, statistics, degenerate labels")
{
    std::mt19937_64 rng(6);
    CalibrationInput in;
    auto scores = [&](double lo, double hi, std::size_t n) {
        std::vector<Scores> out(n);
        for (auto& s : out) {
            const auto v = test::uniform(rng, 5, lo, hi);
            s.rgb = v[0];
            s.depth = v[1];
            s.force = {v[2], v[3], v[4]};
        }
        return out;
    };
    in.clean = scores(0, 1, 50);
    in.rgb_corrupt = scores(2, 3, 50);
    in.depth_corrupt = scores(2, 3, 50);
    in.force_corrupt = scores(2, 3, 50);
    in.train = scores(0, 1, 80);
    const auto t = calibrate(in);
    CHECK(t.rgb > 0.9);
    CHECK(t.rgb < 2.1);
    CHECK(t.rgb_auroc == 1.0);
    CHECK(t.force_auroc == 1.0);
    CHECK(t.rgb_stats.std > 0.0);
    CHECK(calibrate(in).to_json() == t.to_json());

    const auto back = ThresholdTable::from_json(t.to_json());
    CHECK(back.to_json() == t.to_json());
    CHECK(back.calibrated);

    in.rgb_corrupt.clear();
    CHECK_THROWS_AS(calibrate(in), ContractError);
    CHECK_THROWS_AS(ThresholdTable::from_json("{}"), ContractError);
}

TEST_CASE("recon errors: three force dims, determinism, batching")
{
    const auto& data = test::tiny_dataset();
    const model::FusionModel m(test::tiny_config().model, data.stats.robot_mask);
    const auto& obs = data.val.frames[2].obs;
    const auto a = recon_error(obs, m);
    const auto b = recon_error(obs, m);
    CHECK(a.force.size() == 3);
    CHECK(a.rgb == b.rgb);
    CHECK(a.force == b.force);
    std::vector<const sim::Observation*> many;
    for (const auto& f : data.val.frames) {
        many.push_back(&f.obs);
    }
    const auto batch = recon_errors(many, m, 7);
    CHECK(batch[2].rgb == doctest::Approx(a.rgb).epsilon(1e-12));
}

TEST_CASE("corruption suite report shape")
{
    const auto& data = test::tiny_dataset();
    const Config cfg = test::tiny_config();
    const model::FusionModel m(cfg.model, data.stats.robot_mask);
    const auto table = calibrate_on(data, m, cfg, 3);
    CHECK(calibrate_on(data, m, cfg, 3).to_json() == table.to_json());
    const auto rows = evaluate_suite(data.val, m, table, cfg, data.stats, 4);
    // clean + rgb{box, brightness, rotation} + depth{box, rotation} + force{blackout, 3 noise levels}
    CHECK(rows.size() == 10);
    const auto csv = suite_csv(rows, "abc", 4);
    CHECK(csv.starts_with("# config_hash=abc seed=4\n"));
}
