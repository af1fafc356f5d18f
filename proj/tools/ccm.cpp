// ccm: data generation, representation training, calibration, policy
// training, evaluation and self-test from the command line.

#include "ccm/config.hpp"
#include "ccm/detector/suite.hpp"
#include "ccm/error.hpp"
#include "ccm/io/binary.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/pipeline/pipeline.hpp"
#include "ccm/policy/policy.hpp"
#include "ccm/selftest.hpp"
#include "ccm/sim/dataset.hpp"
#include "ccm/training/trainer.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace fs = std::filesystem;
using namespace ccm;

namespace {

std::string one_line(std::string s)
{
    for (auto& c : s) {
        if (c == '\n' || c == '\r') {
            c = ' ';
        }
    }
    return s;
}

/// Lines of a config dump whose key starts with one of `prefixes`.
std::string section(const Config& cfg, std::initializer_list<std::string_view> prefixes)
{
    std::istringstream in(cfg.dump());
    std::string out;
    for (std::string line; std::getline(in, line);) {
        for (auto p : prefixes) {
            if (line.starts_with(p)) {
                out += line + "\n";
            }
        }
    }
    return out;
}

void require_same_data(const Config& a, const Config& b, const std::string& what)
{
    if (section(a, {"sim.", "data."}) != section(b, {"sim.", "data."})) {
        throw ContractError(what + ": sim/data settings differ from the ones the dataset was generated with");
    }
}

std::string header(const std::string& hash, std::uint64_t seed)
{
    return "# config_hash=" + hash + " seed=" + std::to_string(seed) + "\n";
}

fs::path policy_file(const fs::path& p) { return fs::is_directory(p) ? p / "policy.json" : p; }

struct Options {
    std::string config;
    std::string data;
    std::string out;
    std::string ckpt;
    std::string policy;
    std::string thresholds;
    std::optional<int> episodes;
    std::optional<std::uint64_t> seed;
    std::optional<int> epochs;
    AblationFlags ablation;
    bool quiet = false;
};

int gen_data(const Options& o)
{
    const Config cfg = Config::load(o.config);
    cfg.validate();
    const sim::Dataset data = sim::generate_dataset(cfg);
    sim::save_dataset(data, o.out);
    if (!o.quiet) {
        std::cerr << "wrote " << o.out << ": " << data.train.size() << "/" << data.val.size() << "/"
                  << data.test.size() << " frames\n";
    }
    return 0;
}

int train_rep(const Options& o)
{
    Config cfg = Config::load(o.config);
    cfg.train.ablation.no_latent_dist |= o.ablation.no_latent_dist;
    cfg.train.ablation.recon_only |= o.ablation.recon_only;
    cfg.train.ablation.ss_only |= o.ablation.ss_only;
    cfg.train.ablation.zero_force |= o.ablation.zero_force;
    if (o.epochs) {
        cfg.train.epochs = *o.epochs;
    }
    cfg.validate();
    const sim::Dataset data = sim::load_dataset(o.data);
    require_same_data(cfg, Config::parse(data.config_text), "train-rep");
    auto result = training::train(data, cfg, o.quiet ? nullptr : &std::cerr);
    model::save_checkpoint(o.out, result.model, cfg, data.stats);
    io::write_text(fs::path(o.out) / "losses.csv", training::loss_csv(result.history, cfg.hash(), cfg.train.seed));
    return 0;
}

int calibrate_cmd(const Options& o)
{
    const auto ckpt = model::load_checkpoint(o.ckpt);
    const sim::Dataset data = sim::load_dataset(o.data);
    require_same_data(ckpt.config, Config::parse(data.config_text), "calibrate");
    const std::uint64_t seed = o.seed.value_or(ckpt.config.corruption.calibration_seed);
    auto table = detector::calibrate_on(data, ckpt.model, ckpt.config, seed);
    table.config_hash = ckpt.config.hash();
    const fs::path out(o.out);
    if (out.has_parent_path()) {
        fs::create_directories(out.parent_path());
    }
    io::write_text(out, table.to_json());
    const auto rows = detector::evaluate_suite(data.val, ckpt.model, table, ckpt.config, ckpt.stats,
                                               derive_seed(seed, {100}));
    fs::path csv = out;
    csv.replace_extension(".auroc.csv");
    io::write_text(csv, detector::suite_csv(rows, table.config_hash, seed));
    if (!o.quiet) {
        std::cerr << "auroc rgb=" << table.rgb_auroc << " depth=" << table.depth_auroc
                  << " force=" << table.force_auroc << "\n";
    }
    return 0;
}

int train_policy(const Options& o)
{
    const auto ckpt = model::load_checkpoint(o.ckpt);
    const sim::Dataset data = sim::load_dataset(o.data);
    require_same_data(ckpt.config, Config::parse(data.config_text), "train-policy");
    Config cfg = ckpt.config;
    if (o.epochs) {
        cfg.policy.epochs = *o.epochs;
    }
    const auto before = ckpt.model.flat_parameters();
    const auto rep_hash = policy::parameter_hash(before);
    auto result = policy::bc_train(data, ckpt.model, cfg, o.quiet ? nullptr : &std::cerr);
    if (policy::parameter_hash(ckpt.model.flat_parameters()) != rep_hash) {
        throw ContractError("representation parameters changed during behavior cloning");
    }
    const fs::path dir(o.out);
    fs::create_directories(dir);
    policy::save_policy(dir / "policy.json", result.policy, cfg, rep_hash);
    io::write_text(dir / "bc_nll.csv", policy::bc_csv(result, cfg.hash(), cfg.policy.seed));
    return 0;
}

int evaluate_cmd(const Options& o)
{
    const auto ckpt = model::load_checkpoint(o.ckpt);
    const auto loaded = policy::load_policy(policy_file(o.policy));
    if (loaded.representation_hash != policy::parameter_hash(ckpt.model.flat_parameters())) {
        throw ContractError("policy was trained on a different representation checkpoint");
    }
    const auto table = detector::ThresholdTable::from_json(io::read_text(o.thresholds));
    if (table.config_hash != ckpt.config.hash()) {
        throw ContractError("threshold table was calibrated for config " + table.config_hash + ", checkpoint has " +
                            ckpt.config.hash());
    }
    const Config& cfg = ckpt.config;
    const int episodes = o.episodes.value_or(cfg.eval.episodes);
    const std::uint64_t seed = o.seed.value_or(cfg.eval.seed);
    const std::string hash = cfg.hash();

    sim::Split test;
    if (!o.data.empty()) {
        sim::Dataset data = sim::load_dataset(o.data);
        require_same_data(cfg, Config::parse(data.config_text), "evaluate");
        test = std::move(data.test);
    } else {
        test = sim::generate_raw_split(cfg, sim::SplitId::test);
        sim::normalize_split(test, ckpt.stats);
    }

    const fs::path out(o.out);
    fs::create_directories(out);
    io::write_text(out / "latent_distance.csv",
                   pipeline::latent_shift_csv(pipeline::latent_shift(test, ckpt.model), hash, seed));
    io::write_text(out / "detection.csv",
                   detector::suite_csv(detector::evaluate_suite(test, ckpt.model, table, cfg, ckpt.stats,
                                                                derive_seed(seed, {200})),
                                       hash, seed));

    std::ofstream log(out / "rollouts.jsonl", std::ios::binary);
    log << "{\"config_hash\":\"" << hash << "\",\"seed\":" << seed << ",\"episodes\":" << episodes << "}\n";
    std::ostringstream csv;
    csv << header(hash, seed) << "condition,modality,rate\n";
    const policy::EvalContext ctx{loaded.policy, ckpt.model, ckpt.stats, table, cfg};
    auto run = [&](policy::Condition c, std::optional<model::Modality> m) {
        const auto r = policy::rollout_eval(ctx, c, m, episodes, seed, &log);
        csv << policy::condition_name(c) << ',' << (m ? model::name(*m) : "none") << ',' << std::setprecision(17)
            << r.success_rate << "\n";
        if (!o.quiet) {
            std::cerr << policy::condition_name(c) << ' ' << (m ? model::name(*m) : "none") << ' ' << r.success_rate
                      << "\n";
        }
    };
    run(policy::Condition::normal, std::nullopt);
    for (auto m : model::kDroppable) {
        run(policy::Condition::compensated, m);
        run(policy::Condition::not_compensated, m);
    }
    io::write_text(out / "success.csv", csv.str());
    return 0;
}

int run_selftest(const Options&)
{
    bool ok = true;
    for (const auto& c : selftest::run_all()) {
        std::cout << (c.passed ? "PASS " : "FAIL ") << c.name << " (" << c.detail << ") " << std::fixed
                  << std::setprecision(3) << c.seconds << "s\n"
                  << std::defaultfloat;
        ok = ok && c.passed;
    }
    if (!ok) {
        std::cerr << "error: selftest: one or more oracle checks failed\n";
        return 1;
    }
    return 0;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Crossmodal compensation: multimodal fusion, corruption detection and compensated control"};
    app.require_subcommand(1);
    Options o;
    app.add_flag("-q,--quiet", o.quiet, "Suppress progress output");

    auto* gen = app.add_subcommand("gen-data", "Generate the expert dataset");
    gen->add_option("--config", o.config, "Config file")->required();
    gen->add_option("--out", o.out, "Output dataset directory")->required();

    auto* rep = app.add_subcommand("train-rep", "Train the representation model");
    rep->add_option("--data", o.data, "Dataset directory")->required();
    rep->add_option("--config", o.config, "Config file")->required();
    rep->add_option("--out", o.out, "Output checkpoint directory")->required();
    rep->add_option("--epochs", o.epochs, "Override train.epochs");
    rep->add_flag("--no-dist", o.ablation.no_latent_dist, "Drop the latent-distance loss");
    rep->add_flag("--recon-only", o.ablation.recon_only, "Reconstruction and KL losses only");
    rep->add_flag("--ss-only", o.ablation.ss_only, "Self-supervised losses only");
    rep->add_flag("--zero-force", o.ablation.zero_force, "Feed zeros to the force encoder");

    auto* cal = app.add_subcommand("calibrate", "Calibrate detection thresholds on the validation split");
    cal->add_option("--data", o.data, "Dataset directory")->required();
    cal->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
    cal->add_option("--out", o.out, "Threshold table (JSON)")->required();
    cal->add_option("--seed", o.seed, "Corruption seed (default corruption.calibration_seed)");

    auto* pol = app.add_subcommand("train-policy", "Behavior-clone the policy on the frozen latent");
    pol->add_option("--data", o.data, "Dataset directory")->required();
    pol->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
    pol->add_option("--out", o.out, "Output policy directory")->required();
    pol->add_option("--epochs", o.epochs, "Override policy.epochs");

    auto* ev = app.add_subcommand("evaluate", "Rollouts, latent distances and detection report");
    ev->add_option("--ckpt", o.ckpt, "Checkpoint directory")->required();
    ev->add_option("--policy", o.policy, "Policy directory or file")->required();
    ev->add_option("--thresholds", o.thresholds, "Threshold table (JSON)")->required();
    ev->add_option("--episodes", o.episodes, "Episodes per condition (default eval.episodes)");
    ev->add_option("--seed", o.seed, "Evaluation seed (default eval.seed)");
    ev->add_option("--out", o.out, "Report directory")->required();
    ev->add_option("--data", o.data, "Dataset directory; the test split is regenerated when omitted");

    auto* st = app.add_subcommand("selftest", "Run the built-in oracle checks");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << one_line(e.what()) << "\n";
        return 2;
    }

    try {
        if (gen->parsed()) {
            return gen_data(o);
        }
        if (rep->parsed()) {
            return train_rep(o);
        }
        if (cal->parsed()) {
            return calibrate_cmd(o);
        }
        if (pol->parsed()) {
            return train_policy(o);
        }
        if (ev->parsed()) {
            return evaluate_cmd(o);
        }
        if (st->parsed()) {
            return run_selftest(o);
        }
    } catch (const ContractError& e) {
        std::cerr << "error: contract: " << one_line(e.what()) << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "error: numeric: " << one_line(e.what()) << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
