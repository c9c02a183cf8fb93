// Command-line driver: corpus generation, training, evaluation, gating
// analytics, ablation grid and gradient audit. Exit codes: 0 success,
// 1 invalid configuration or input, 2 numerical failure, 3 other runtime
// errors (I/O).

#include "merit/error.hpp"
#include "merit/experiment.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace merit;

namespace {

struct Options {
    std::string config;
    std::vector<std::string> overrides;
    std::string output;
    std::string checkpoint;
    bool untrained = false;
};

struct Context {
    json resolved;
    ExperimentConfig cfg;
    fs::path dir;
};

Context resolve(const Options& o)
{
    json file;
    if (!o.config.empty()) {
        file = load_config_file(o.config);
    } else if (!o.output.empty() && fs::exists(fs::path(o.output) / "config.resolved.json")) {
        file = load_config_file(fs::path(o.output) / "config.resolved.json");
    }
    std::vector<std::string> overrides = o.overrides;
    if (!o.output.empty())
        overrides.push_back("output_dir=\"" + o.output + "\"");
    Context ctx;
    ctx.resolved = resolve_config(file, overrides);
    ctx.cfg = parse_config(ctx.resolved);
    ctx.dir = ctx.cfg.output_dir;
    fs::create_directories(ctx.dir);
    return ctx;
}

void write_json(const fs::path& path, const json& j)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << j.dump(2) << '\n';
}

void persist_config(const Context& ctx)
{
    write_json(ctx.dir / "config.resolved.json", ctx.resolved);
}

class Timer {
public:
    explicit Timer(const Context& ctx, std::string key) : path_(ctx.dir / "timing.json"), key_(std::move(key)) {}
    ~Timer()
    {
        json j = json::object();
        if (std::ifstream in(path_); in)
            j = json::parse(in, nullptr, false);
        if (!j.is_object())
            j = json::object();
        j[key_] = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
        std::ofstream(path_) << j.dump(2) << '\n';
    }

private:
    fs::path path_;
    std::string key_;
    std::chrono::steady_clock::time_point start_ = std::chrono::steady_clock::now();
};

Dataset load_dataset(const Context& ctx)
{
    const fs::path corpus = ctx.dir / "corpus";
    if (fs::exists(corpus / "corpus.tsv"))
        return build_dataset(ctx.cfg, read_corpus(corpus, ctx.cfg.data.sample_rate));
    return build_dataset(ctx.cfg, corpus_files(ctx.cfg, make_corpus(ctx.cfg)));
}

MeritModel load_model(const Context& ctx, const Options& o, Dataset& data)
{
    MeritModel model = make_model(ctx.cfg);
    if (!o.untrained) {
        const fs::path ckpt = o.checkpoint.empty() ? ctx.dir / "checkpoints" / "final.json" : fs::path(o.checkpoint);
        const auto params = model.parameters();
        load_checkpoint(ckpt, params);
    }
    if (!ctx.cfg.model.backbone.trainable)
        model.cache_features(data.test);
    return model;
}

int cmd_config(const Options& o)
{
    const Context ctx = resolve(o);
    std::cout << ctx.resolved.dump(2) << '\n';
    return 0;
}

int cmd_gen(const Options& o)
{
    const Context ctx = resolve(o);
    Timer timer(ctx, "gen_seconds");
    persist_config(ctx);
    const CorpusFiles files = corpus_files(ctx.cfg, make_corpus(ctx.cfg));
    write_corpus(ctx.dir / "corpus", files);
    std::cout << "wrote " << files.records.size() << " signals to " << (ctx.dir / "corpus").string() << '\n';
    return 0;
}

TrainingLog do_train(const Context& ctx, Dataset& data, MeritModel& model)
{
    Timer timer(ctx, "train_seconds");
    persist_config(ctx);
    const auto params = model.parameters();
    if (!ctx.cfg.model.backbone.trainable) {
        model.cache_features(data.train);
        model.cache_features(data.dev);
        model.cache_features(data.test);
    }
    TrainingLog log;
    log.phase1 = train_phase1(model, data.train, ctx.cfg.training, data.weights, derive_seed(ctx.cfg.seed, "phase1"));
    save_checkpoint(ctx.dir / "checkpoints" / "phase1.json", params);
    log.phase2 = train_phase2(model, data.train, data.dev, ctx.cfg.training, data.weights,
                              derive_seed(ctx.cfg.seed, "phase2"));
    save_checkpoint(ctx.dir / "checkpoints" / "final.json", params);
    write_loss_csv(ctx.dir / "losses.csv", log.phase2.train);
    write_loss_csv(ctx.dir / "losses_dev.csv", log.phase2.dev);
    write_loss_csv(ctx.dir / "losses_phase1_se.csv", log.phase1.se);
    write_loss_csv(ctx.dir / "losses_phase1_ser.csv", log.phase1.ser);
    write_json(ctx.dir / "training.json", training_json(log));
    const auto& curve = log.phase2.train;
    std::cout << "phase 2 objective " << curve.front().total << " -> " << curve.back().total << " (best dev epoch "
              << log.phase2.best_epoch << ")\n";
    return log;
}

void do_eval(const Context& ctx, MeritModel& model, const Dataset& data, const std::optional<TrainingLog>& log)
{
    Timer timer(ctx, "eval_seconds");
    const Evaluation eval = evaluate(model, data.test, ctx.cfg);
    const AnalyticsReport analytics = analytics_report(eval.traces, ctx.cfg.model.n_experts);
    write_metrics_csv(ctx.dir / "metrics.csv", eval);
    write_analytics(ctx.dir, analytics);
    std::optional<TrainingLog> training = log;
    json report = report_json(ctx.resolved, training, eval, analytics);
    if (!log && fs::exists(ctx.dir / "training.json")) {
        std::ifstream in(ctx.dir / "training.json");
        report["training"] = json::parse(in);
    }
    write_json(ctx.dir / "report.json", report);
    for (const auto& c : eval.conditions)
        std::cout << noise_family_spec(c.family).name << ' ' << c.snr_db << " dB: F1-macro " << c.model.f1_macro
                  << " F1-micro " << c.model.f1_micro << " SSNR " << c.model.ssnr_db << " (noisy "
                  << c.identity_ssnr_db << ") L1 " << c.model.l1 << " (noisy " << c.identity_l1 << ")\n";
}

int cmd_train(const Options& o)
{
    const Context ctx = resolve(o);
    Dataset data = load_dataset(ctx);
    MeritModel model = make_model(ctx.cfg);
    do_train(ctx, data, model);
    return 0;
}

int cmd_eval(const Options& o)
{
    const Context ctx = resolve(o);
    Dataset data = load_dataset(ctx);
    MeritModel model = load_model(ctx, o, data);
    do_eval(ctx, model, data, std::nullopt);
    return 0;
}

int cmd_run(const Options& o)
{
    const Context ctx = resolve(o);
    Dataset data = load_dataset(ctx);
    MeritModel model = make_model(ctx.cfg);
    const TrainingLog log = do_train(ctx, data, model);
    do_eval(ctx, model, data, log);
    return 0;
}

int cmd_analyze(const Options& o)
{
    const Context ctx = resolve(o);
    Timer timer(ctx, "analyze_seconds");
    Dataset data = load_dataset(ctx);
    MeritModel model = load_model(ctx, o, data);
    const Evaluation eval = evaluate(model, data.test, ctx.cfg);
    const AnalyticsReport analytics = analytics_report(eval.traces, ctx.cfg.model.n_experts);
    write_analytics(ctx.dir, analytics);
    std::cout << "grouping,condition,se_switch,ser_switch,agreement\n";
    for (const auto& r : analytics.switch_agreement)
        std::cout << r.grouping << ',' << r.condition << ',' << r.se_switch << ',' << r.ser_switch << ','
                  << r.agreement << '\n';
    return 0;
}

int cmd_ablate(const Options& o)
{
    const Context ctx = resolve(o);
    Timer timer(ctx, "ablate_seconds");
    persist_config(ctx);
    const auto rows = run_ablation(ctx.resolved);
    write_ablation_csv(ctx.dir / "ablation.csv", rows, ctx.cfg);
    std::cout << "wrote " << rows.size() << " configurations to " << (ctx.dir / "ablation.csv").string() << '\n';
    return 0;
}

int cmd_gradcheck(const Options& o)
{
    const Context ctx = resolve(o);
    Timer timer(ctx, "gradcheck_seconds");
    const GradCheckReport report = run_gradcheck(ctx.cfg);
    write_json(ctx.dir / "gradcheck.json", gradcheck_json(report));
    for (const auto& e : report.params)
        std::cout << (e.passed ? "ok   " : "FAIL ") << e.name << " checked " << e.checked << '/' << e.entries
                  << " max_rel " << e.max_rel_error << (e.frozen ? " (frozen)" : "") << '\n';
    std::cout << (report.passed() ? "gradcheck passed" : "gradcheck FAILED") << ", max relative error "
              << report.max_rel_error() << ", " << report.checked() << " entries checked, " << report.excluded()
              << " excluded\n";
    return report.passed() ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Sparse mixture-of-experts joint speech enhancement and emotion recognition"};
    app.require_subcommand(1);
    Options o;

    const auto common = [&o](CLI::App* sub) {
        sub->add_option("-c,--config", o.config, "JSON config file layered over its preset");
        sub->add_option("-s,--set", o.overrides, "Override a dot-path, e.g. moe.n_experts=5")->take_all();
        sub->add_option("-o,--output", o.output, "Run directory (overrides output_dir)");
        return sub;
    };
    const auto trained = [&o](CLI::App* sub) {
        sub->add_option("--checkpoint", o.checkpoint, "Checkpoint to evaluate (default <run>/checkpoints/final.json)");
        sub->add_flag("--untrained", o.untrained, "Evaluate the freshly initialized model");
        return sub;
    };

    std::function<int()> action;
    common(app.add_subcommand("config", "Print the resolved configuration"))->callback([&] { action = [&] { return cmd_config(o); }; });
    common(app.add_subcommand("gen", "Generate and store the corpus"))->callback([&] { action = [&] { return cmd_gen(o); }; });
    common(app.add_subcommand("train", "Two-phase training"))->callback([&] { action = [&] { return cmd_train(o); }; });
    trained(common(app.add_subcommand("eval", "Metrics over noise families and SNRs")))->callback([&] {
        action = [&] { return cmd_eval(o); };
    });
    trained(common(app.add_subcommand("analyze", "Gating analytics on the test conditions")))->callback([&] {
        action = [&] { return cmd_analyze(o); };
    });
    common(app.add_subcommand("run", "train followed by eval"))->callback([&] { action = [&] { return cmd_run(o); }; });
    common(app.add_subcommand("ablate", "Routing x expert count x balancing grid"))->callback([&] {
        action = [&] { return cmd_ablate(o); };
    });
    common(app.add_subcommand("gradcheck", "Finite-difference audit of the full pipeline"))->callback([&] {
        action = [&] { return cmd_gradcheck(o); };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    fs::path diag_dir = o.output.empty() ? fs::path(".") : fs::path(o.output);
    try {
        return action();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 1;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        try {
            const Context ctx = resolve(o);
            diag_dir = ctx.dir;
        } catch (const std::exception&) {
        }
        std::ofstream(diag_dir / "diagnostics.txt") << e.what() << '\n';
        std::cerr << "diagnostics written to " << (diag_dir / "diagnostics.txt").string() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
