#include "merit/model.hpp"

#include "merit/error.hpp"
#include "merit/rng.hpp"

#include <json.hpp>

#include <fstream>
#include <map>

namespace merit {

Example make_example(const std::string& id, std::size_t label, const Waveform& clean, const NoisyUtterance& noisy,
                     const NormStats& stats, const BackboneConfig& backbone)
{
    Example ex;
    ex.id = id;
    ex.label = make_label(label).index;
    ex.family = noisy.family;
    ex.snr_db = noisy.snr_db;
    ex.clean = clean;
    ex.noisy = noisy.noisy;
    const StftConfig stft = backbone.stft();
    ex.features = log1p_spectrum(z_normalize(noisy.noisy, stats), stft).magnitude;
    ex.noisy_spec = log1p_spectrum(noisy.noisy, stft).magnitude;
    ex.clean_spec = log1p_spectrum(clean, stft).magnitude;
    return ex;
}

MeritModel::MeritModel(const ModelConfig& cfg, std::uint64_t seed) : backbone(cfg.backbone), cfg_(cfg)
{
    if (cfg.n_experts == 0)
        throw ConfigError("moe.n_experts", "must be at least 1");
    if (cfg.top_k < 1 || cfg.top_k > cfg.n_experts)
        throw ConfigError("moe.top_k", "must lie in [1, n_experts]");
    const std::size_t in = cfg.backbone.concat_width();
    const std::size_t d = cfg.backbone.dim;
    Rng expert_rng(derive_seed(seed, "init.experts"));
    pool = ExpertPool(cfg.n_experts, in, cfg.expert_hidden, d, expert_rng);
    Rng ser_gate_rng(derive_seed(seed, "init.gate.ser"));
    ser_gate = GatingNetwork(Task::Ser, in, cfg.n_experts, ser_gate_rng);
    Rng se_gate_rng(derive_seed(seed, "init.gate.se"));
    se_gate = GatingNetwork(Task::Se, in, cfg.n_experts, se_gate_rng);
    Rng ser_rng(derive_seed(seed, "init.head.ser"));
    ser_head = SerHead(d, cfg.ser_hidden, ser_rng);
    Rng se_rng(derive_seed(seed, "init.head.se"));
    se_head = SeHead(d, cfg.backbone.stft().bins(), cfg.se_hidden, cfg.se_init, se_rng);
}

void MeritModel::cache_features(std::span<Example> examples) const
{
    if (cfg_.backbone.trainable)
        throw Error("features can only be cached for a frozen backbone");
    Backbone local = backbone;
    for (auto& ex : examples) {
        Tape tape;
        ex.concat = local.forward_concat(tape, tape.constant(ex.features)).value();
    }
}

BatchOutput MeritModel::forward(Tape& tape, std::span<const Example* const> batch, const LossOptions& opts)
{
    if (batch.empty())
        throw Error("empty batch");
    if (!opts.ser && !opts.se)
        throw Error("at least one task loss must be enabled");
    const std::size_t frames = batch.front()->features.rows();
    for (const Example* ex : batch)
        if (ex->features.rows() != frames)
            throw ShapeError("batch mixes utterances with " + std::to_string(frames) + " and " +
                             std::to_string(ex->features.rows()) + " frames");

    BatchOutput out;
    out.frames_per_example = frames;
    const bool cached = !cfg_.backbone.trainable && !batch.front()->concat.empty();
    std::vector<Var> parts;
    parts.reserve(batch.size());
    Var concat;
    if (cached) {
        for (const Example* ex : batch)
            parts.push_back(tape.constant(ex->concat));
        concat = batch.size() == 1 ? parts.front() : ad::concat_rows(parts);
    } else {
        for (const Example* ex : batch)
            parts.push_back(tape.constant(ex->features));
        Var features = batch.size() == 1 ? parts.front() : ad::concat_rows(parts);
        concat = backbone.forward_concat(tape, features);
    }

    const std::size_t k = cfg_.effective_k();
    std::vector<Var> terms;
    std::vector<Var> balances;
    if (opts.ser) {
        out.ser_moe = moe_forward(tape, pool, ser_gate, concat, k);
        std::vector<Var> logits;
        logits.reserve(batch.size());
        for (std::size_t b = 0; b < batch.size(); ++b)
            logits.push_back(ser_head.classify(tape, ad::slice_rows(out.ser_moe->z, b * frames, (b + 1) * frames)));
        out.ser_logits = batch.size() == 1 ? logits.front() : ad::concat_rows(logits);
        std::vector<std::size_t> labels;
        for (const Example* ex : batch)
            labels.push_back(ex->label);
        out.wce = weighted_cross_entropy(out.ser_logits, labels, opts.weights);
        terms.push_back(out.wce);
        if (opts.balancing) {
            const auto top1 = out.ser_moe->decision.top1_sequence();
            balances.push_back(balancing_loss(out.ser_moe->gates, top1, opts.alpha));
        }
    }
    if (opts.se) {
        out.se_moe = moe_forward(tape, pool, se_gate, concat, k);
        std::vector<Var> noisy, clean;
        for (const Example* ex : batch) {
            noisy.push_back(tape.constant(ex->noisy_spec));
            clean.push_back(tape.constant(ex->clean_spec));
        }
        Var noisy_all = batch.size() == 1 ? noisy.front() : ad::concat_rows(noisy);
        Var clean_all = batch.size() == 1 ? clean.front() : ad::concat_rows(clean);
        out.se_spec = se_head.decode(tape, out.se_moe->z, noisy_all);
        out.l1 = l1_loss(out.se_spec, clean_all);
        terms.push_back(out.l1);
        if (opts.balancing) {
            const auto top1 = out.se_moe->decision.top1_sequence();
            balances.push_back(balancing_loss(out.se_moe->gates, top1, opts.alpha));
        }
    }
    if (!balances.empty()) {
        out.balance = balances.size() == 1 ? balances.front()
                                           : ad::scale(ad::add(balances[0], balances[1]), 0.5);
        terms.push_back(out.balance);
    }
    out.total = terms.front();
    for (std::size_t i = 1; i < terms.size(); ++i)
        out.total = ad::add(out.total, terms[i]);
    return out;
}

std::vector<Parameter*> MeritModel::parameters()
{
    std::vector<Parameter*> out = backbone.parameters();
    for (auto* p : routing_parameters())
        out.push_back(p);
    for (auto* p : head_parameters())
        out.push_back(p);
    return out;
}

std::vector<Parameter*> MeritModel::head_parameters()
{
    std::vector<Parameter*> out = ser_head.parameters();
    for (auto* p : se_head.parameters())
        out.push_back(p);
    return out;
}

std::vector<Parameter*> MeritModel::routing_parameters()
{
    std::vector<Parameter*> out = pool.parameters();
    for (auto* p : ser_gate.parameters())
        out.push_back(p);
    for (auto* p : se_gate.parameters())
        out.push_back(p);
    return out;
}

std::vector<Tensor> snapshot(std::span<Parameter* const> params)
{
    std::vector<Tensor> out;
    out.reserve(params.size());
    for (const Parameter* p : params)
        out.push_back(p->value);
    return out;
}

void restore(std::span<Parameter* const> params, std::span<const Tensor> values)
{
    if (params.size() != values.size())
        throw Error("snapshot does not match the parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i]->value.shape() != values[i].shape())
            throw ShapeError("snapshot shape mismatch for " + params[i]->name);
        params[i]->value = values[i];
    }
}

void save_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params)
{
    nlohmann::json j;
    j["format"] = "merit-checkpoint";
    j["version"] = 1;
    auto& list = j["parameters"] = nlohmann::json::array();
    for (const Parameter* p : params) {
        const auto data = p->value.data();
        list.push_back({{"name", p->name},
                        {"shape", p->value.shape()},
                        {"group", p->group == ParamGroup::Backbone ? "backbone" : "model"},
                        {"frozen", p->frozen},
                        {"data", std::vector<double>(data.begin(), data.end())}});
    }
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw Error("cannot write checkpoint " + path.string());
    out << j.dump() << '\n';
}

void load_checkpoint(const std::filesystem::path& path, std::span<Parameter* const> params)
{
    std::ifstream in(path);
    if (!in)
        throw Error("cannot read checkpoint " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw Error("checkpoint " + path.string() + " is not valid JSON: " + e.what());
    }
    if (j.value("format", "") != "merit-checkpoint" || j.value("version", 0) != 1)
        throw Error("checkpoint " + path.string() + " has an unsupported format");
    std::map<std::string, const nlohmann::json*> by_name;
    for (const auto& entry : j.at("parameters"))
        by_name[entry.at("name").get<std::string>()] = &entry;
    for (Parameter* p : params) {
        const auto it = by_name.find(p->name);
        if (it == by_name.end())
            throw Error("checkpoint " + path.string() + " lacks parameter " + p->name);
        const Shape shape = it->second->at("shape").get<Shape>();
        if (shape != p->value.shape())
            throw ShapeError("checkpoint parameter " + p->name + " has shape " + shape_string(shape) +
                             ", model expects " + shape_string(p->value.shape()));
        p->value = Tensor(shape, it->second->at("data").get<std::vector<double>>());
    }
}

}  // namespace merit
