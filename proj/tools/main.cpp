#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "t2s/config.hpp"
#include "t2s/errors.hpp"
#include "t2s/gradcheck.hpp"
#include "t2s/report.hpp"
#include "t2s/rng.hpp"
#include "t2s/trainer.hpp"

namespace fs = std::filesystem;
using namespace t2s;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

std::string resolve_out_root(const std::string& flag) {
    if (!flag.empty()) return flag;
    if (const char* env = std::getenv("T2S_OUT_ROOT"); env && *env) return env;
    return "out";
}

std::string utc_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

std::string fmt_g(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string fmt_short(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Options shared by the commands that build a run configuration. Overrides
// are applied on top of the (optional) config file, last writer wins.
struct ConfigCli {
    std::string config_path;
    std::string mode;
    double mu = 0.0;
    std::uint64_t seed = 0;
    std::string order;
    int episodes = 0;
    int epochs = 0;
    CLI::Option* opt_mode = nullptr;
    CLI::Option* opt_mu = nullptr;
    CLI::Option* opt_seed = nullptr;
    CLI::Option* opt_order = nullptr;
    CLI::Option* opt_episodes = nullptr;
    CLI::Option* opt_epochs = nullptr;

    void attach(CLI::App* cmd, bool with_mode = true) {
        cmd->add_option("--config", config_path, "flat key=value config file");
        if (with_mode) {
            opt_mode = cmd->add_option("--mode", mode,
                                       "t2s | naive-independent | task-id | sequential");
        }
        opt_mu = cmd->add_option("--mu", mu, "shared-token cap fraction in [0,1]");
        opt_seed = cmd->add_option("--seed", seed, "master seed");
        opt_order = cmd->add_option("--order", order, "comma-separated task permutation");
        opt_episodes = cmd->add_option("--episodes", episodes, "evaluation rollouts per task");
        opt_epochs = cmd->add_option("--epochs", epochs, "training epochs per task");
    }

    LifelongRunConfig build() const {
        LifelongRunConfig cfg =
            config_path.empty() ? default_run_config() : load_config_file(config_path);
        if (opt_mode && opt_mode->count()) cfg.mode = run_mode_from_string(mode);
        if (opt_mu->count()) cfg.policy.mu = mu;
        if (opt_seed->count()) cfg.seed = seed;
        if (opt_order->count()) apply_config_kv(cfg, "order", order);
        if (opt_episodes->count()) cfg.eval_episodes = episodes;
        if (opt_epochs->count()) cfg.epochs = epochs;
        return cfg;
    }
};

nlohmann::json file_map() {
    return {{"config", "config.txt"},
            {"success_matrix", "success_matrix.csv"},
            {"metrics", "metrics.csv"},
            {"ledger", "ledger.csv"},
            {"checkpoint", "checkpoint.bin"},
            {"summary", "summary.txt"},
            {"success_curve", "success_curve.svg"},
            {"token_bars", "token_bars.svg"}};
}

// Everything is computed before the first byte is written, so a failed run
// leaves no partial output directory behind.
fs::path write_run_artifacts(const fs::path& root, const LifelongRunConfig& cfg,
                             const LifelongResult& res, const Checkpoint& ck) {
    const std::string tag = hex16(res.config_hash);
    const fs::path dir = root / tag;
    fs::create_directories(dir);
    const std::int64_t rows_per_task =
        cfg.policy.j * static_cast<std::int64_t>(ck.layers.size());

    nlohmann::json manifest;
    manifest["format"] = "t2s-run-v1";
    manifest["hash"] = tag;
    manifest["seed"] = cfg.seed;
    manifest["mode"] = run_mode_name(cfg.mode);
    manifest["tasks"] = cfg.suite.K;
    manifest["nbt_convention"] = nbt_convention_token(cfg.nbt_convention);
    manifest["rows_per_task"] = rows_per_task;
    manifest["created_utc"] = utc_now();
    manifest["config"] = canonical_config_text(cfg);
    manifest["files"] = file_map();

    write_text_file((dir / "config.txt").string(), canonical_config_text(cfg));
    write_text_file((dir / "success_matrix.csv").string(),
                    render_success_matrix_csv(res.matrix, res.config_hash));
    write_text_file((dir / "metrics.csv").string(),
                    render_metrics_csv(res, cfg.nbt_convention, res.config_hash));
    write_text_file((dir / "ledger.csv").string(),
                    render_ledger_csv(res.reports, res.config_hash));
    write_text_file((dir / "summary.txt").string(),
                    render_summary_text(res.matrix, res.reports, cfg.nbt_convention,
                                        res.config_hash));
    write_text_file((dir / "success_curve.svg").string(),
                    render_success_curve_svg(res.matrix, res.config_hash));
    write_text_file((dir / "token_bars.svg").string(),
                    render_token_bars_svg(res.reports, rows_per_task, res.config_hash));
    save_checkpoint(ck, (dir / "checkpoint.bin").string());
    write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    return dir;
}

LifelongResult execute_run(const LifelongRunConfig& cfg, Checkpoint& ck_out, bool verbose) {
    LifelongTrainer trainer(cfg);
    while (!trainer.done()) {
        const TaskReport r = trainer.train_next_task();
        if (verbose) {
            const double diag = trainer.matrix().at(r.position, r.position);
            std::printf("[%d/%d] task %d \"%s\": rows %lld (shared %lld, trainable %lld), "
                        "probe %s, loss %s -> %s, success %s\n",
                        r.position + 1, trainer.total(), r.task_id, r.instruction.c_str(),
                        static_cast<long long>(r.selected_rows),
                        static_cast<long long>(r.shared_rows),
                        static_cast<long long>(r.trainable_rows), fmt_short(r.fwt_one_epoch).c_str(),
                        fmt_short(r.first_loss).c_str(), fmt_short(r.final_loss).c_str(),
                        fmt_short(diag).c_str());
            std::fflush(stdout);
        }
    }
    ck_out = trainer.snapshot();
    return trainer.result();
}

int cmd_run(const ConfigCli& cc, const std::string& out_flag) {
    const LifelongRunConfig cfg = cc.build();
    Checkpoint ck;
    const LifelongResult res = execute_run(cfg, ck, true);
    const fs::path dir = write_run_artifacts(resolve_out_root(out_flag), cfg, res, ck);
    std::printf("run %s mode %s seed %llu tasks %d\n", hex16(res.config_hash).c_str(),
                run_mode_name(cfg.mode), static_cast<unsigned long long>(cfg.seed), cfg.suite.K);
    std::printf("fwt %s", fmt_g(res.fwt).c_str());
    if (res.nbt_defined) std::printf("  nbt %s", fmt_g(res.nbt).c_str());
    std::printf("  auc %s\n", fmt_g(res.auc).c_str());
    std::printf("pool rows used %lld, cumulative trainable %lld\n",
                static_cast<long long>(res.used_rows_total),
                static_cast<long long>([&] {
                    std::int64_t s = 0;
                    for (const TaskReport& r : res.reports) s += r.trainable_rows;
                    return s;
                }()));
    std::printf("wrote %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_sweep(const ConfigCli& cc, const std::string& out_flag, const std::string& parameter,
              const std::string& values) {
    const LifelongRunConfig base = cc.build();
    const fs::path root = resolve_out_root(out_flag);

    std::vector<LifelongRunConfig> configs;
    std::vector<std::string> value_names, plot_labels;
    if (parameter == "mu") {
        std::stringstream ss(values);
        std::string part;
        while (std::getline(ss, part, ',')) {
            LifelongRunConfig cfg = base;
            apply_config_kv(cfg, "policy_mu", part);
            configs.push_back(cfg);
            value_names.push_back(part);
            plot_labels.push_back(part);
        }
        if (configs.size() < 2) throw ConfigError("sweep over mu needs at least 2 values");
    } else if (parameter == "order") {
        int n = 0;
        try {
            n = std::stoi(values);
        } catch (const std::exception&) {
            throw ConfigError("sweep over order expects a permutation count, got '" + values +
                              "'");
        }
        if (n < 2) throw ConfigError("sweep over order needs at least 2 permutations");
        for (int i = 0; i < n; ++i) {
            std::vector<int> perm(static_cast<std::size_t>(base.suite.K));
            for (int k = 0; k < base.suite.K; ++k) perm[static_cast<std::size_t>(k)] = k;
            Rng rng = make_rng(mix_seed(base.seed, "sweep-order", static_cast<std::uint64_t>(i)));
            std::shuffle(perm.begin(), perm.end(), rng);
            LifelongRunConfig cfg = base;
            cfg.order = perm;
            configs.push_back(cfg);
            std::string name;
            for (std::size_t k = 0; k < perm.size(); ++k) {
                if (k) name += '-';
                name += std::to_string(perm[k]);
            }
            value_names.push_back(name);
            plot_labels.push_back("p" + std::to_string(i + 1));
        }
    } else {
        throw ConfigError("unknown sweep parameter '" + parameter + "' (expected mu or order)");
    }

    const std::uint64_t sweep_hash =
        hash_str(canonical_config_text(base) + "sweep=" + parameter + "\nvalues=" + values + "\n");
    std::vector<SweepRow> rows;
    std::vector<double> fwt_values;
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < configs.size(); ++i) {
        std::printf("-- %s = %s\n", parameter.c_str(), value_names[i].c_str());
        std::fflush(stdout);
        Checkpoint ck;
        const LifelongResult res = execute_run(configs[i], ck, false);
        write_run_artifacts(root, configs[i], res, ck);
        SweepRow row;
        row.parameter = parameter;
        row.value = value_names[i];
        row.seed = base.seed;
        row.fwt = res.fwt;
        row.nbt = res.nbt_defined ? res.nbt : 0.0;
        row.auc = res.auc;
        row.used_rows = res.used_rows_total;
        rows.push_back(row);
        fwt_values.push_back(res.fwt);
        runs.push_back(hex16(res.config_hash));
        std::printf("   fwt %s nbt %s auc %s rows %lld\n", fmt_short(res.fwt).c_str(),
                    fmt_short(row.nbt).c_str(), fmt_short(res.auc).c_str(),
                    static_cast<long long>(res.used_rows_total));
        std::fflush(stdout);
    }

    const fs::path dir = root / ("sweep_" + hex16(sweep_hash));
    fs::create_directories(dir);
    nlohmann::json manifest = {{"format", "t2s-sweep-v1"},
                               {"hash", hex16(sweep_hash)},
                               {"parameter", parameter},
                               {"values", value_names},
                               {"seed", base.seed},
                               {"created_utc", utc_now()},
                               {"runs", runs},
                               {"config", canonical_config_text(base)}};
    write_text_file((dir / "sweep.csv").string(), render_sweep_csv(rows, sweep_hash));
    write_text_file((dir / "sweep_fwt.svg").string(),
                    render_sweep_plot_svg(plot_labels, fwt_values, parameter, sweep_hash));
    write_text_file((dir / "manifest.json").string(), manifest.dump(2) + "\n");
    std::printf("wrote %s\n", dir.string().c_str());
    return kExitOk;
}

int cmd_gradcheck(std::uint64_t seed) {
    const std::vector<GradCheckEntry> entries = run_gradcheck(seed);
    for (const GradCheckEntry& e : entries) {
        if (e.tolerance > 0.0) {
            std::printf("%-26s max rel err %.3e  (tol %.0e)  %s\n", e.component.c_str(),
                        e.max_rel_err, e.tolerance, e.pass ? "pass" : "FAIL");
        } else {
            std::printf("%-26s max |grad|   %.3e  (exactly 0)  %s\n", e.component.c_str(),
                        e.max_rel_err, e.pass ? "pass" : "FAIL");
        }
    }
    if (!gradcheck_passed(entries)) {
        std::fprintf(stderr, "gradcheck failed\n");
        return kExitNumerical;
    }
    return kExitOk;
}

int cmd_report(const std::string& run_dir) {
    const fs::path dir = run_dir;
    const std::string manifest_text = read_text_file((dir / "manifest.json").string());
    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(manifest_text);
    } catch (const std::exception& e) {
        throw LoadError("manifest.json is not valid json: " + std::string(e.what()));
    }
    if (!manifest.contains("hash") || !manifest.contains("nbt_convention") ||
        !manifest.contains("rows_per_task")) {
        throw LoadError("manifest.json is missing run fields (hash, nbt_convention, rows_per_task)");
    }
    const std::string tag = manifest["hash"].get<std::string>();
    const std::uint64_t hash = std::strtoull(tag.c_str(), nullptr, 16);
    if (hex16(hash) != tag) throw LoadError("manifest hash '" + tag + "' is not a 16-digit hex id");
    const NbtConvention convention =
        nbt_convention_from_string(manifest["nbt_convention"].get<std::string>());
    const std::int64_t rows_per_task = manifest["rows_per_task"].get<std::int64_t>();

    const SuccessMatrix matrix =
        parse_success_matrix_csv(read_text_file((dir / "success_matrix.csv").string()), hash);
    const std::vector<TaskReport> reports =
        parse_ledger_csv(read_text_file((dir / "ledger.csv").string()), hash);
    const std::string metrics_text = read_text_file((dir / "metrics.csv").string());
    if (metrics_text.rfind("# manifest=" + tag + "\n", 0) != 0) {
        throw LoadError("metrics table: manifest mismatch (directory manifest is " + tag + ")");
    }

    const std::string summary = render_summary_text(matrix, reports, convention, hash);
    write_text_file((dir / "summary.txt").string(), summary);
    write_text_file((dir / "success_curve.svg").string(),
                    render_success_curve_svg(matrix, hash));
    write_text_file((dir / "token_bars.svg").string(),
                    render_token_bars_svg(reports, rows_per_task, hash));
    std::fputs(summary.c_str(), stdout);
    return kExitOk;
}

int cmd_demo_gen(const ConfigCli& cc, const std::string& out_flag) {
    const LifelongRunConfig cfg = cc.build();
    SuiteParams params = cfg.suite;
    params.seed = cfg.seed;
    const std::vector<Task> tasks = make_suite(params);
    const int n = cc.opt_episodes->count() ? cc.episodes : cfg.demos_per_task;
    if (n < 1) throw ConfigError("demo count must be positive");
    std::vector<std::vector<Demonstration>> demos;
    demos.reserve(tasks.size());
    for (const Task& t : tasks) demos.push_back(scripted_expert(t, cfg.seed, n, params));
    const std::uint64_t hash = config_hash(cfg);
    const fs::path root = resolve_out_root(out_flag);
    fs::create_directories(root);
    const fs::path path = root / ("demos_" + hex16(hash) + ".json");
    write_text_file(path.string(), render_demos_json(tasks, demos, params, hash));
    std::size_t total = 0;
    for (const auto& d : demos) total += d.size();
    std::printf("wrote %zu demonstrations over %zu tasks to %s\n", total, tasks.size(),
                path.string().c_str());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"tokenized skill scaling: lifelong imitation learning runs and reports"};
    app.require_subcommand(1);

    std::string out_flag;

    CLI::App* run = app.add_subcommand("run", "train a full lifelong sequence and write artifacts");
    ConfigCli run_cc;
    run_cc.attach(run);
    run->add_option("--out", out_flag, "output root (default: $T2S_OUT_ROOT or ./out)");

    CLI::App* sweep = app.add_subcommand("sweep", "run one setting per value and compare");
    ConfigCli sweep_cc;
    sweep_cc.attach(sweep);
    std::string sweep_parameter, sweep_values;
    sweep->add_option("--parameter", sweep_parameter, "mu | order")->required();
    sweep->add_option("--values", sweep_values,
                      "comma-separated mu values, or a count of random orders")
        ->required();
    sweep->add_option("--out", out_flag, "output root");

    CLI::App* gradcheck = app.add_subcommand("gradcheck", "finite-difference audit of the tape");
    std::uint64_t gc_seed = 1;
    gradcheck->add_option("--seed", gc_seed, "probe seed");

    CLI::App* report = app.add_subcommand("report", "re-render summary and figures from tables");
    std::string report_dir;
    report->add_option("dir", report_dir, "completed run directory")->required();

    CLI::App* demo_gen = app.add_subcommand("demo-gen", "write expert demonstrations to json");
    ConfigCli demo_cc;
    demo_cc.attach(demo_gen, false);
    demo_gen->add_option("--out", out_flag, "output root");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (run->parsed()) return cmd_run(run_cc, out_flag);
        if (sweep->parsed()) return cmd_sweep(sweep_cc, out_flag, sweep_parameter, sweep_values);
        if (gradcheck->parsed()) return cmd_gradcheck(gc_seed);
        if (report->parsed()) return cmd_report(report_dir);
        if (demo_gen->parsed()) return cmd_demo_gen(demo_cc, out_flag);
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const Error& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
