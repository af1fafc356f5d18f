// End-to-end acceptance run. Drives the ccm binary through every stage on the
// desk preset and prints one PASS/FAIL line per criterion.

#include "ccm/config.hpp"
#include "ccm/model/fusion.hpp"
#include "ccm/pipeline/pipeline.hpp"
#include "ccm/selftest.hpp"
#include "ccm/sim/dataset.hpp"

#include "CLI11.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace ccm;

namespace {

struct Settings {
    std::string ccm;
    std::string config;
    std::string work;
    bool reuse = false;
};

std::string quote(const std::string& s) { return "'" + s + "'"; }

/// Run one CLI stage; returns wall seconds, or a negative value on failure.
/// With --reuse, a stage whose marker file exists is skipped and its
/// recorded time is returned instead.
double stage(const Settings& s, const std::string& name, const std::string& args)
{
    const fs::path marker = fs::path(s.work) / ("." + name + ".seconds");
    if (s.reuse && fs::exists(marker)) {
        std::ifstream in(marker);
        double t = -1.0;
        in >> t;
        std::cout << "  [" << name << "] reused (" << t << " s)\n";
        return t;
    }
    const std::string cmd = quote(s.ccm) + " -q " + args + " > " + quote((fs::path(s.work) / (name + ".log")).string()) +
                            " 2>&1";
    const auto t0 = std::chrono::steady_clock::now();
    const int rc = std::system(cmd.c_str());
    const double t = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "  [" << name << "] exit " << rc << " in " << t << " s" << std::endl;
    if (rc != 0) {
        return -1.0;
    }
    std::ofstream(marker) << t << "\n";
    return t;
}

std::vector<std::vector<std::string>> read_csv(const fs::path& file)
{
    std::vector<std::vector<std::string>> rows;
    std::ifstream in(file);
    std::string line;
    bool header = true;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') {
            continue;
        }
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            cells.push_back(cell);
        }
        rows.push_back(cells);
    }
    return rows;
}

std::string slurp(const fs::path& file)
{
    std::ifstream in(file, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

/// Every regular file under `a` must exist under `b` with identical bytes.
bool same_tree(const fs::path& a, const fs::path& b, std::string& detail)
{
    int files = 0;
    for (const auto& e : fs::recursive_directory_iterator(a)) {
        if (!e.is_regular_file() || e.path().filename().string().front() == '.' || e.path().extension() == ".log") {
            continue;
        }
        const auto rel = fs::relative(e.path(), a);
        ++files;
        if (!fs::exists(b / rel) || slurp(e.path()) != slurp(b / rel)) {
            detail = "differs: " + rel.string();
            return false;
        }
    }
    detail = std::to_string(files) + " files identical";
    return files > 0;
}

int failures = 0;

void report(int id, const std::string& title, bool ok, const std::string& detail)
{
    std::cout << (ok ? "PASS" : "FAIL") << " criterion " << id << ": " << title << " (" << detail << ")" << std::endl;
    failures += ok ? 0 : 1;
}

std::string fmt(double v)
{
    std::ostringstream os;
    os.precision(4);
    os << v;
    return os.str();
}

void criteria_oracles()
{
    const auto poe = selftest::poe_oracle();
    report(1, "PoE oracle", poe.passed && poe.seconds < 1.0, poe.detail + ", " + fmt(poe.seconds) + " s");
    const auto grad = selftest::gradient_checks();
    report(2, "gradient suite", grad.passed && grad.seconds < 30.0, grad.detail + ", " + fmt(grad.seconds) + " s");
    const auto roc = selftest::auroc_oracle();
    report(3, "AUROC oracle", roc.passed && roc.seconds < 1.0, roc.detail + ", " + fmt(roc.seconds) + " s");
}

/// Mean latent shift per dropped modality on a regenerated test split.
std::map<std::string, double> shifts(const fs::path& ckpt_dir)
{
    const auto ckpt = model::load_checkpoint(ckpt_dir);
    auto test = sim::generate_raw_split(ckpt.config, sim::SplitId::test);
    sim::normalize_split(test, ckpt.stats);
    std::map<std::string, double> out;
    for (const auto& r : pipeline::latent_shift(test, ckpt.model)) {
        out[std::string(model::name(r.dropped))] = r.mean_l2;
    }
    return out;
}

/// All stages in order; returns false as soon as one fails.
bool run_pipeline(const Settings& s, const std::string& prefix, const std::string& config, const fs::path& dir,
                  std::map<std::string, double>& t)
{
    const auto p = [&](const std::string& leaf) { return quote((dir / leaf).string()); };
    fs::create_directories(dir);
    t["gen"] = stage(s, prefix + "gen", "gen-data --config " + quote(config) + " --out " + p("data"));
    if (t["gen"] < 0) {
        return false;
    }
    t["train"] = stage(s, prefix + "train", "train-rep --data " + p("data") + " --config " + quote(config) + " --out " +
                                                p("ckpt"));
    if (t["train"] < 0) {
        return false;
    }
    t["calibrate"] = stage(s, prefix + "calibrate", "calibrate --data " + p("data") + " --ckpt " + p("ckpt") +
                                                        " --out " + p("thresholds.json"));
    if (t["calibrate"] < 0) {
        return false;
    }
    t["policy"] = stage(s, prefix + "policy", "train-policy --data " + p("data") + " --ckpt " + p("ckpt") + " --out " +
                                                  p("policy"));
    if (t["policy"] < 0) {
        return false;
    }
    t["evaluate"] = stage(s, prefix + "evaluate", "evaluate --ckpt " + p("ckpt") + " --policy " + p("policy") +
                                                      " --thresholds " + p("thresholds.json") + " --out " + p("eval"));
    return t["evaluate"] >= 0;
}

} // namespace

int main(int argc, char** argv)
{
    Settings s;
    CLI::App app{"ccm acceptance run"};
    app.add_option("--ccm", s.ccm, "Path to the ccm binary")->required();
    app.add_option("--config", s.config, "Desk config")->required();
    app.add_option("--work", s.work, "Work directory")->required();
    app.add_flag("--reuse", s.reuse, "Skip stages that already completed in the work directory");
    CLI11_PARSE(app, argc, argv);
    const fs::path work(s.work);
    if (!s.reuse) {
        fs::remove_all(work);
    }
    fs::create_directories(work);

    criteria_oracles();

    // Desk pipeline.
    std::map<std::string, double> t;
    const fs::path desk = work / "desk";
    const bool desk_ok = run_pipeline(s, "desk-", s.config, desk, t);

    // Criterion 4: detection on held-out test frames.
    {
        bool ok = desk_ok && t["train"] <= 900.0 && t["calibrate"] <= 120.0;
        std::string detail = "train " + fmt(t["train"]) + " s, calibrate " + fmt(t["calibrate"]) + " s";
        if (desk_ok) {
            for (const auto& row : read_csv(desk / "eval" / "detection.csv")) {
                const bool wanted = (row[0] == "depth" && row[1] == "rotation") ||
                                    (row[0] == "rgb" && row[1] == "rotation") ||
                                    (row[0] == "force" && row[1] == "blackout_force");
                if (wanted) {
                    const double auroc = std::stod(row[3]);
                    ok = ok && auroc >= 0.95;
                    detail += ", " + row[0] + " " + row[1] + " " + fmt(auroc);
                }
            }
        }
        report(4, "detection AUROC >= 0.95", ok, detail);
    }

    // Criterion 5: latent distance against the --no-dist ablation.
    {
        const double tn = stage(s, "desk-train-nodist", "train-rep --no-dist --data " + quote((desk / "data").string()) +
                                                          " --config " + quote(s.config) + " --out " +
                                                          quote((desk / "ckpt-nodist").string()));
        bool ok = desk_ok && tn >= 0;
        std::string detail;
        if (ok) {
            const auto ccm = shifts(desk / "ckpt");
            const auto nodist = shifts(desk / "ckpt-nodist");
            for (const auto& [m, v] : ccm) {
                ok = ok && v < nodist.at(m);
                detail += (detail.empty() ? "" : ", ") + m + " " + fmt(v) + " vs " + fmt(nodist.at(m));
            }
        }
        report(5, "latent shift below --no-dist", ok, detail.empty() ? "stage failed" : detail);
    }

    // Criterion 6: rollouts.
    {
        bool ok = desk_ok && t["evaluate"] < 600.0;
        std::string detail = "evaluate " + fmt(t["evaluate"]) + " s";
        if (desk_ok) {
            std::map<std::string, double> rate;
            for (const auto& row : read_csv(desk / "eval" / "success.csv")) {
                rate[row[0] + "/" + row[1]] = std::stod(row[2]);
            }
            ok = ok && rate["normal/none"] >= 0.80;
            detail += ", normal " + fmt(rate["normal/none"]);
            for (const std::string m : {"rgb", "depth", "force"}) {
                const double c = rate["compensated/" + m];
                const double n = rate["not_compensated/" + m];
                if (m != "force") {
                    ok = ok && c - n >= 0.15;
                }
                detail += ", " + m + " " + fmt(c) + " vs " + fmt(n);
            }
        }
        report(6, "policy compensation", ok, detail);
    }

    // Criterion 7: every stage twice on a reduced preset, plus a desk recalibration.
    {
        const fs::path tiny_cfg = work / "tiny.cfg";
        std::ofstream(tiny_cfg) << test::tiny_config().dump();
        std::map<std::string, double> ta;
        std::map<std::string, double> tb;
        bool ok = run_pipeline(s, "det-a-", tiny_cfg.string(), work / "det-a", ta) &&
                  run_pipeline(s, "det-b-", tiny_cfg.string(), work / "det-b", tb);
        std::string detail = "tiny pipeline failed";
        if (ok) {
            ok = same_tree(work / "det-a", work / "det-b", detail);
        }
        if (ok && desk_ok) {
            const fs::path again = work / "desk-thresholds-again.json";
            ok = stage(s, "desk-calibrate-again", "calibrate --data " + quote((desk / "data").string()) + " --ckpt " +
                                                      quote((desk / "ckpt").string()) + " --out " +
                                                      quote(again.string())) >= 0 &&
                 slurp(again) == slurp(desk / "thresholds.json") &&
                 slurp(work / "desk-thresholds-again.auroc.csv") == slurp(desk / "thresholds.auroc.csv");
            detail += ok ? ", desk thresholds identical" : ", desk thresholds differ";
        }
        report(7, "byte-identical reruns", ok, detail);
    }

    // Criterion 8: selftest from an empty directory.
    {
        const fs::path empty = work / "empty";
        fs::create_directories(empty);
        const std::string cmd = "cd " + quote(empty.string()) + " && " + quote(fs::absolute(s.ccm).string()) +
                                " selftest > selftest.log 2>&1";
        const int rc = std::system(cmd.c_str());
        report(8, "selftest green", rc == 0, "exit " + std::to_string(rc));
    }

    return failures == 0 ? 0 : 1;
}
