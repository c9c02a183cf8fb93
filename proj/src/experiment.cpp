#include "merit/experiment.hpp"

#include "merit/error.hpp"
#include "merit/rng.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

namespace merit {

using nlohmann::json;

namespace {

constexpr std::size_t kEvalBatch = 32;

json loss_rows(std::span<const EpochLoss> rows)
{
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"epoch", r.epoch}, {"wce", r.wce}, {"l1", r.l1}, {"balance", r.balance}, {"total", r.total}});
    return out;
}

json usage_rows(const std::vector<UsageRow>& rows)
{
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"condition", r.condition}, {"frames", r.frames}, {"histogram", r.histogram}});
    return out;
}

Dataset prepare(const ExperimentConfig& cfg)
{
    const Corpus corpus = make_corpus(cfg);
    return build_dataset(cfg, corpus_files(cfg, corpus));
}

RunResult run_on(const ExperimentConfig& cfg, Dataset& data)
{
    MeritModel model = make_model(cfg);
    RunResult result;
    result.log = train_model(model, data, cfg);
    result.eval = evaluate(model, data.test, cfg);
    result.analytics = analytics_report(result.eval.traces, cfg.model.n_experts);
    return result;
}

}  // namespace

Corpus make_corpus(const ExperimentConfig& cfg)
{
    return generate_corpus(derive_seed(cfg.seed, "corpus"), cfg.data);
}

CorpusFiles corpus_files(const ExperimentConfig& cfg, const Corpus& corpus)
{
    const std::uint64_t noise_seed = derive_seed(cfg.seed, "noise");
    CorpusFiles files;
    const auto add = [&](const Utterance& u, const std::string& split, const std::string& family, double snr,
                         Waveform w) {
        CorpusRecord r;
        r.id = u.id;
        r.split = split;
        r.label = u.label.index;
        r.family = family;
        r.snr_db = snr;
        r.length = w.size();
        files.records.push_back(std::move(r));
        files.signals.push_back(std::move(w));
    };
    const auto add_noisy = [&](const Utterance& u, const std::string& split, NoiseFamily family, double snr) {
        NoisyUtterance n = contaminate(u, family, snr, noise_seed);
        add(u, split, std::string(noise_family_spec(family).name), snr, std::move(n.noisy));
    };
    const std::string train_family(noise_family_spec(cfg.train_family).name);
    for (const auto& u : corpus.train) {
        add(u, "train", "clean", 0.0, u.clean);
        add_noisy(u, "train", cfg.train_family, cfg.train_snr_db);
    }
    for (const auto& u : corpus.dev) {
        add(u, "dev", "clean", 0.0, u.clean);
        add_noisy(u, "dev", cfg.train_family, cfg.train_snr_db);
    }
    for (const auto& u : corpus.test) {
        add(u, "test", "clean", 0.0, u.clean);
        for (NoiseFamily f : cfg.eval.families)
            for (double snr : cfg.eval.snr_db)
                add_noisy(u, "test", f, snr);
    }
    return files;
}

Dataset build_dataset(const ExperimentConfig& cfg, const CorpusFiles& files)
{
    std::map<std::pair<std::string, std::string>, std::size_t> clean;  // (split, id) -> signal
    for (std::size_t i = 0; i < files.records.size(); ++i)
        if (files.records[i].family == "clean")
            clean[{files.records[i].split, files.records[i].id}] = i;

    struct Pending {
        std::size_t noisy, clean;
    };
    std::vector<Pending> train, dev, test;
    for (std::size_t i = 0; i < files.records.size(); ++i) {
        const CorpusRecord& r = files.records[i];
        if (r.family == "clean")
            continue;
        const auto it = clean.find({r.split, r.id});
        if (it == clean.end())
            throw Error("corpus: no clean signal for " + r.split + "/" + r.id);
        const NoiseFamily family = parse_noise_family(r.family);
        if (r.split == "test") {
            test.push_back({i, it->second});
        } else if (family == cfg.train_family && r.snr_db == cfg.train_snr_db) {
            (r.split == "train" ? train : dev).push_back({i, it->second});
        }
    }
    if (train.empty())
        throw Error("corpus holds no training utterances at the configured training condition");

    Dataset data;
    std::vector<Waveform> train_noisy;
    for (const auto& p : train)
        train_noisy.push_back(files.signals[p.noisy]);
    data.stats = estimate_norm_stats(train_noisy);

    const auto build = [&](const std::vector<Pending>& items, std::vector<Example>& out) {
        out.reserve(items.size());
        for (const auto& p : items) {
            const CorpusRecord& r = files.records[p.noisy];
            NoisyUtterance n;
            n.source_id = r.id;
            n.noisy = files.signals[p.noisy];
            n.family = parse_noise_family(r.family);
            n.snr_db = r.snr_db;
            out.push_back(make_example(r.id, r.label, files.signals[p.clean], n, data.stats, cfg.model.backbone));
        }
    };
    build(train, data.train);
    build(dev, data.dev);
    build(test, data.test);
    data.weights = class_weights_for(data.train);
    return data;
}

MeritModel make_model(const ExperimentConfig& cfg)
{
    return MeritModel(cfg.model, derive_seed(cfg.seed, "model"));
}

TrainingLog train_model(MeritModel& model, Dataset& data, const ExperimentConfig& cfg)
{
    if (!cfg.model.backbone.trainable) {
        model.cache_features(data.train);
        model.cache_features(data.dev);
        model.cache_features(data.test);
    }
    TrainingLog log;
    log.phase1 = train_phase1(model, data.train, cfg.training, data.weights, derive_seed(cfg.seed, "phase1"));
    log.phase2 = train_phase2(model, data.train, data.dev, cfg.training, data.weights, derive_seed(cfg.seed, "phase2"));
    return log;
}

Evaluation evaluate(MeritModel& model, std::span<const Example> test, const ExperimentConfig& cfg)
{
    Evaluation eval;
    LossOptions opts;
    std::map<std::pair<int, double>, std::vector<const Example*>> groups;
    for (const auto& ex : test)
        groups[{static_cast<int>(ex.family), ex.snr_db}].push_back(&ex);

    for (const auto& [key, items] : groups) {
        ConditionMetrics cm;
        cm.family = static_cast<NoiseFamily>(key.first);
        cm.snr_db = key.second;
        std::vector<std::size_t> preds, labels;
        double l1 = 0.0, ssnr_sum = 0.0, id_l1 = 0.0, id_ssnr = 0.0;
        for (std::size_t start = 0; start < items.size(); start += kEvalBatch) {
            const std::size_t end = std::min(items.size(), start + kEvalBatch);
            const std::span<const Example* const> batch(items.data() + start, end - start);
            Tape tape;
            BatchOutput out = model.forward(tape, batch, opts);
            const Tensor& logits = out.ser_logits.value();
            const Tensor& spec = out.se_spec.value();
            const std::size_t frames = out.frames_per_example;
            for (std::size_t b = 0; b < batch.size(); ++b) {
                const Example& ex = *batch[b];
                preds.push_back(predict_class(logits.row_span(b)));
                labels.push_back(ex.label);
                ++cm.model.class_counts.at(ex.label);

                Tensor est = Tensor::matrix(frames, spec.cols());
                for (std::size_t t = 0; t < frames; ++t)
                    for (std::size_t f = 0; f < spec.cols(); ++f)
                        est.at(t, f) = spec.at(b * frames + t, f);
                l1 += l1_loss(est, ex.clean_spec);
                id_l1 += l1_loss(ex.noisy_spec, ex.clean_spec);
                const Waveform enhanced = resynthesize(est, stft(ex.noisy, cfg.model.backbone.stft()), ex.noisy);
                ssnr_sum += ssnr(ex.clean, enhanced, cfg.ssnr);
                id_ssnr += ssnr(ex.clean, ex.noisy, cfg.ssnr);

                RoutingTrace trace;
                trace.id = ex.id;
                trace.snr_db = ex.snr_db;
                trace.family = ex.family;
                trace.label = ex.label;
                const RoutingDecision& ds = out.ser_moe->decision;
                const RoutingDecision& de = out.se_moe->decision;
                trace.ser_gates = Tensor::matrix(frames, ds.n_experts());
                trace.se_gates = Tensor::matrix(frames, de.n_experts());
                for (std::size_t t = 0; t < frames; ++t) {
                    trace.ser.push_back(ds.top1(b * frames + t));
                    trace.se.push_back(de.top1(b * frames + t));
                    for (std::size_t n = 0; n < ds.n_experts(); ++n) {
                        trace.ser_gates.at(t, n) = ds.gates.at(b * frames + t, n);
                        trace.se_gates.at(t, n) = de.gates.at(b * frames + t, n);
                    }
                }
                eval.traces.push_back(std::move(trace));
            }
        }
        const double n = static_cast<double>(items.size());
        const F1Scores f1 = f1_scores(preds, labels);
        cm.model.f1_macro = f1.macro;
        cm.model.f1_micro = f1.micro;
        cm.model.l1 = l1 / n;
        cm.model.ssnr_db = ssnr_sum / n;
        cm.identity_l1 = id_l1 / n;
        cm.identity_ssnr_db = id_ssnr / n;
        cm.majority = majority_baseline(labels);
        eval.conditions.push_back(cm);
    }
    return eval;
}

const ConditionMetrics& find_condition(const Evaluation& eval, NoiseFamily family, double snr_db)
{
    for (const auto& c : eval.conditions)
        if (c.family == family && c.snr_db == snr_db)
            return c;
    throw Error("no evaluation at " + std::string(noise_family_spec(family).name) + " " + std::to_string(snr_db) +
                " dB");
}

RunResult run_in_memory(const ExperimentConfig& cfg)
{
    Dataset data = prepare(cfg);
    return run_on(cfg, data);
}

void write_metrics_csv(const std::filesystem::path& path, const Evaluation& eval)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "family,role,snr_db,utterances,f1_macro,f1_micro,ssnr_db,l1,identity_ssnr_db,identity_l1,"
           "majority_f1_macro,majority_f1_micro\n"
        << std::setprecision(17);
    for (const auto& c : eval.conditions) {
        const auto& spec = noise_family_spec(c.family);
        out << spec.name << ',' << spec.role << ',' << c.snr_db << ',' << c.model.total() << ',' << c.model.f1_macro
            << ',' << c.model.f1_micro << ',' << c.model.ssnr_db << ',' << c.model.l1 << ',' << c.identity_ssnr_db
            << ',' << c.identity_l1 << ',' << c.majority.macro << ',' << c.majority.micro << '\n';
    }
}

json training_json(const TrainingLog& log)
{
    return {{"phase1_se", loss_rows(log.phase1.se)},
            {"phase1_ser", loss_rows(log.phase1.ser)},
            {"phase2_train", loss_rows(log.phase2.train)},
            {"phase2_dev", loss_rows(log.phase2.dev)},
            {"best_epoch", log.phase2.best_epoch}};
}

json report_json(const json& resolved, const std::optional<TrainingLog>& log, const Evaluation& eval,
                 const AnalyticsReport& analytics)
{
    const ExperimentConfig cfg = parse_config(resolved);
    json metrics = json::array();
    for (const auto& c : eval.conditions) {
        const auto& spec = noise_family_spec(c.family);
        metrics.push_back({{"family", spec.name},
                           {"role", spec.role},
                           {"snr_db", c.snr_db},
                           {"f1_macro", c.model.f1_macro},
                           {"f1_micro", c.model.f1_micro},
                           {"ssnr_db", c.model.ssnr_db},
                           {"l1", c.model.l1},
                           {"class_counts", c.model.class_counts},
                           {"identity_ssnr_db", c.identity_ssnr_db},
                           {"identity_l1", c.identity_l1},
                           {"majority_f1_macro", c.majority.macro},
                           {"majority_f1_micro", c.majority.micro}});
    }
    json switch_rows = json::array();
    for (const auto& r : analytics.switch_agreement)
        switch_rows.push_back({{"grouping", r.grouping},
                               {"condition", r.condition},
                               {"utterances", r.utterances},
                               {"frames", r.frames},
                               {"se_switch", r.se_switch},
                               {"ser_switch", r.ser_switch},
                               {"agreement", r.agreement}});
    json report = {
        {"format", "merit-report"},
        {"version", 1},
        {"config_digest", config_digest(resolved)},
        {"seed", cfg.seed},
        {"notes",
         {{"ssnr", {{"frame", cfg.ssnr.frame}, {"hop", cfg.ssnr.hop}, {"floor_db", cfg.ssnr.floor_db},
                    {"ceil_db", cfg.ssnr.ceil_db}, {"resynthesis", "enhanced magnitude with noisy phase"}}},
          {"switch_rate", "pooled over frame boundaries of all utterances in a condition"},
          {"analytics_top1", "analytics use the top-ranked expert of each frame"}}},
        {"metrics", metrics},
        {"analytics",
         {{"n_experts", analytics.n_experts},
          {"switch_agreement", switch_rows},
          {"usage_by_snr", {{"ser", usage_rows(analytics.usage_by_snr_ser)}, {"se", usage_rows(analytics.usage_by_snr_se)}}},
          {"usage_by_label",
           {{"ser", usage_rows(analytics.usage_by_label_ser)}, {"se", usage_rows(analytics.usage_by_label_se)}}}}},
    };
    if (log)
        report["training"] = training_json(*log);
    return report;
}

std::vector<AblationRow> run_ablation(const json& resolved)
{
    const ExperimentConfig base = parse_config(resolved);
    Dataset data = prepare(base);
    std::vector<AblationRow> rows;
    for (const std::string& routing : base.ablate.routing)
        for (std::size_t n : base.ablate.n_experts)
            for (bool balancing : base.ablate.balancing) {
                json cell = resolved;
                cell["moe"]["n_experts"] = n;
                cell["moe"]["top_k"] = std::min<std::size_t>(base.model.top_k, n);
                cell["moe"]["dense"] = routing == "dense";
                cell["moe"]["balancing_loss_enabled"] = balancing;
                const ExperimentConfig cfg = parse_config(cell);
                RunResult r = run_on(cfg, data);
                AblationRow row;
                row.routing = routing;
                row.n_experts = n;
                row.balancing = balancing;
                row.final_loss = r.log.phase2.train.back().total;
                row.conditions = std::move(r.eval.conditions);
                rows.push_back(std::move(row));
            }
    return rows;
}

void write_ablation_csv(const std::filesystem::path& path, std::span<const AblationRow> rows,
                        const ExperimentConfig& cfg)
{
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write " + path.string());
    out << "routing,n_experts,balancing,final_train_loss";
    for (NoiseFamily f : cfg.eval.families)
        for (double snr : cfg.eval.snr_db) {
            std::ostringstream tag;
            tag << noise_family_spec(f).name << '_' << snr << "dB";
            out << ",f1_macro_" << tag.str() << ",f1_micro_" << tag.str() << ",ssnr_" << tag.str();
        }
    out << '\n' << std::setprecision(17);
    for (const auto& r : rows) {
        out << r.routing << ',' << r.n_experts << ',' << (r.balancing ? "on" : "off") << ',' << r.final_loss;
        for (NoiseFamily f : cfg.eval.families)
            for (double snr : cfg.eval.snr_db) {
                Evaluation view;
                view.conditions = r.conditions;
                const ConditionMetrics& c = find_condition(view, f, snr);
                out << ',' << c.model.f1_macro << ',' << c.model.f1_micro << ',' << c.model.ssnr_db;
            }
        out << '\n';
    }
}

GradCheckReport run_gradcheck(const ExperimentConfig& cfg)
{
    ModelConfig mc = cfg.model;
    mc.backbone.trainable = cfg.gradcheck.backbone_trainable;
    MeritModel model(mc, derive_seed(cfg.seed, "gradcheck.model"));

    std::vector<Waveform> noisy;
    std::vector<Example> examples;
    std::vector<NoisyUtterance> mixed;
    for (std::size_t i = 0; i < cfg.gradcheck.utterances; ++i) {
        Utterance u;
        u.id = "gradcheck-" + std::to_string(i);
        u.label = make_label(i % kEmotionClasses);
        u.clean = synth_emotion_signal(u.label, cfg.gradcheck.samples, cfg.data.sample_rate,
                                       derive_seed(cfg.seed, u.id));
        mixed.push_back(contaminate(u, cfg.train_family, cfg.train_snr_db, derive_seed(cfg.seed, "gradcheck.noise")));
        noisy.push_back(mixed.back().noisy);
        examples.push_back({});
        examples.back().clean = u.clean;
        examples.back().label = u.label.index;
        examples.back().id = u.id;
    }
    const NormStats stats = estimate_norm_stats(noisy);
    for (std::size_t i = 0; i < examples.size(); ++i)
        examples[i] = make_example(examples[i].id, examples[i].label, examples[i].clean, mixed[i], stats, mc.backbone);

    LossOptions opts;
    opts.balancing = cfg.gradcheck.balancing && (mc.effective_k() == 1 || mc.dense);
    opts.alpha = cfg.training.balancing_alpha;
    std::vector<const Example*> batch;
    for (const auto& ex : examples)
        batch.push_back(&ex);
    const LossBuilder build = [&](Tape& tape) { return model.forward(tape, batch, opts).total; };
    const std::vector<Parameter*> params = model.parameters();
    return finite_difference_check(build, params, cfg.gradcheck.step, cfg.gradcheck.tolerance);
}

json gradcheck_json(const GradCheckReport& report)
{
    json params = json::array();
    for (const auto& e : report.params)
        params.push_back({{"name", e.name},
                          {"entries", e.entries},
                          {"checked", e.checked},
                          {"excluded_routing", e.excluded_routing},
                          {"excluded_kink", e.excluded_kink},
                          {"frozen", e.frozen},
                          {"max_rel_error", e.max_rel_error},
                          {"max_abs_error", e.max_abs_error},
                          {"passed", e.passed}});
    return {{"step", report.step},
            {"tolerance", report.tolerance},
            {"base_tie", report.base_tie},
            {"passed", report.passed()},
            {"max_rel_error", report.max_rel_error()},
            {"checked", report.checked()},
            {"excluded", report.excluded()},
            {"parameters", params}};
}

}  // namespace merit
