#include "merit/config.hpp"

#include "merit/error.hpp"

#include <cstdio>
#include <fstream>

namespace merit {

using nlohmann::json;

namespace {

json toy_preset()
{
    return {
        {"preset", "toy"},
        {"seed", 7},
        {"output_dir", "runs/toy"},
        {"backbone", {{"seed", 1234}, {"layers", 4}, {"dim", 16}, {"frame", 64}, {"hop", 32}, {"fft_size", 64},
                      {"trainable", false}}},
        {"moe", {{"n_experts", 3}, {"top_k", 1}, {"expert_hidden", 64}, {"dense", false},
                 {"balancing_loss_enabled", false}, {"balancing_alpha", 0.01}}},
        {"stft", {{"window", 64}, {"hop", 32}, {"fft_size", 64}}},
        {"ser", {{"classes", 4}, {"hidden", 32}}},
        {"se", {{"hidden", 48}, {"init", "identity"}}},
        {"training",
         {{"phase1", {{"se", {{"epochs", 1}, {"batch", 16}, {"lr", 1e-3}}},
                      {"ser", {{"epochs", 1}, {"batch", 16}, {"lr", 1e-3}}}}},
          {"phase2", {{"epochs", 12}, {"batch", 16}}},
          {"lr_model", 2e-3},
          {"lr_backbone", 1e-3},
          {"adamw", {{"beta1", 0.9}, {"beta2", 0.999}, {"eps", 1e-8}, {"weight_decay", 0.01}}},
          {"ser_loss", true},
          {"se_loss", true},
          {"early_stopping", true}}},
        {"data", {{"sample_rate", 8000.0}, {"utterance_samples", 1024}, {"train", 512}, {"dev", 128},
                  {"test", 256}, {"class_proportions", {10.0, 8.0, 29.0, 53.0}}, {"train_family", "babble"},
                  {"train_snr_db", 5.0}}},
        {"eval", {{"families", {"babble", "ambient", "impulsive"}}, {"snr_db", {-5.0, 0.0, 5.0, 10.0}}}},
        {"ssnr", {{"frame", 64}, {"hop", 32}, {"floor_db", -10.0}, {"ceil_db", 35.0}}},
        {"ablate", {{"routing", {"sparse", "dense"}}, {"n_experts", {1, 3, 5, 7, 9}}, {"balancing", {false, true}}}},
        {"gradcheck", {{"utterances", 2}, {"samples", 320}, {"step", 1e-5}, {"tolerance", 1e-4},
                       {"backbone_trainable", true}, {"balancing", true}}},
    };
}

json full_preset()
{
    json j = toy_preset();
    j["preset"] = "full";
    j["output_dir"] = "runs/full";
    j["backbone"] = {{"seed", 1234}, {"layers", 24}, {"dim", 1024}, {"frame", 400}, {"hop", 320},
                     {"fft_size", 512},  {"trainable", true}};
    j["moe"]["expert_hidden"] = 4096;
    j["stft"] = {{"window", 400}, {"hop", 320}, {"fft_size", 512}};
    j["ser"]["hidden"] = 256;
    j["se"]["hidden"] = 512;
    j["training"]["phase1"]["se"] = {{"epochs", 130}, {"batch", 16}, {"lr", 5e-5}};
    j["training"]["phase1"]["ser"] = {{"epochs", 20}, {"batch", 32}, {"lr", 5e-5}};
    j["training"]["phase2"] = {{"epochs", 20}, {"batch", 32}};
    j["training"]["lr_model"] = 5e-5;
    j["training"]["lr_backbone"] = 2.5e-5;
    j["data"]["sample_rate"] = 16000.0;
    j["data"]["utterance_samples"] = 48000;
    j["ssnr"]["frame"] = 512;
    j["ssnr"]["hop"] = 256;
    j["gradcheck"]["samples"] = 1040;
    return j;
}

std::string join(const std::string& prefix, const std::string& key)
{
    return prefix.empty() ? key : prefix + "." + key;
}

bool same_kind(const json& a, const json& b)
{
    if (a.is_number() && b.is_number())
        return !(a.is_number_integer() && !b.is_number_integer());
    return a.type() == b.type();
}

void merge_into(json& base, const json& overlay, const std::string& prefix)
{
    if (!overlay.is_object())
        throw ConfigError(prefix.empty() ? "<root>" : prefix, "expected an object");
    for (const auto& [key, value] : overlay.items()) {
        const std::string path = join(prefix, key);
        if (!base.contains(key))
            throw ConfigError(path, "unknown key");
        json& slot = base[key];
        if (slot.is_object()) {
            merge_into(slot, value, path);
            continue;
        }
        if (!same_kind(slot, value))
            throw ConfigError(path, std::string("expected ") + (slot.is_number_integer() ? "integer" : slot.type_name()) +
                                        ", got " + value.type_name());
        slot = value;
    }
}

json nest(const std::string& path, const json& value)
{
    const auto dot = path.find('.');
    if (dot == std::string::npos)
        return json{{path, value}};
    return json{{path.substr(0, dot), nest(path.substr(dot + 1), value)}};
}

template <typename T>
T get(const json& j, const std::string& path)
{
    try {
        return j.get<T>();
    } catch (const json::exception& e) {
        throw ConfigError(path, e.what());
    }
}

const json& at(const json& j, const std::string& path)
{
    const json* node = &j;
    std::size_t start = 0;
    while (true) {
        const auto dot = path.find('.', start);
        const std::string key = path.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (!node->is_object() || !node->contains(key))
            throw ConfigError(path, "missing");
        node = &(*node)[key];
        if (dot == std::string::npos)
            return *node;
        start = dot + 1;
    }
}

std::size_t count(const json& j, const std::string& path)
{
    const json& v = at(j, path);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(path, "expected a non-negative integer");
    return v.get<std::size_t>();
}

std::size_t positive(const json& j, const std::string& path)
{
    const std::size_t v = count(j, path);
    if (v == 0)
        throw ConfigError(path, "must be positive");
    return v;
}

double number(const json& j, const std::string& path)
{
    const json& v = at(j, path);
    if (!v.is_number())
        throw ConfigError(path, "expected a number");
    return v.get<double>();
}

double rate(const json& j, const std::string& path)
{
    const double v = number(j, path);
    if (!(v > 0.0))
        throw ConfigError(path, "must be positive");
    return v;
}

bool flag(const json& j, const std::string& path)
{
    const json& v = at(j, path);
    if (!v.is_boolean())
        throw ConfigError(path, "expected true or false");
    return v.get<bool>();
}

NoiseFamily family(const json& v, const std::string& path)
{
    try {
        return parse_noise_family(get<std::string>(v, path));
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(path, e.what());
    }
}

HeadPhaseConfig head_phase(const json& j, const std::string& path)
{
    return {count(j, path + ".epochs"), positive(j, path + ".batch"), rate(j, path + ".lr")};
}

}  // namespace

json preset_config(const std::string& name)
{
    if (name == "toy")
        return toy_preset();
    if (name == "full")
        return full_preset();
    throw ConfigError("preset", "unknown preset '" + name + "' (expected toy or full)");
}

json resolve_config(const json& file, std::span<const std::string> overrides)
{
    std::string preset = "toy";
    if (!file.is_null()) {
        if (!file.is_object())
            throw ConfigError("<root>", "config must be a JSON object");
        if (file.contains("preset"))
            preset = get<std::string>(file["preset"], "preset");
    }
    json resolved = preset_config(preset);
    if (!file.is_null())
        merge_into(resolved, file, "");
    for (const std::string& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0)
            throw ConfigError(o, "override must look like path=value");
        const std::string path = o.substr(0, eq);
        const std::string text = o.substr(eq + 1);
        json value = json::parse(text, nullptr, false);
        if (value.is_discarded())
            value = text;
        if (path == "preset")
            throw ConfigError(path, "the preset can only be chosen in the config file");
        merge_into(resolved, nest(path, value), "");
    }
    return resolved;
}

ExperimentConfig parse_config(const json& r)
{
    ExperimentConfig c;
    const json& seed = at(r, "seed");
    if (!seed.is_number_integer() || seed.get<long long>() < 0)
        throw ConfigError("seed", "expected a non-negative integer");
    c.seed = seed.get<std::uint64_t>();
    c.output_dir = get<std::string>(at(r, "output_dir"), "output_dir");

    BackboneConfig& b = c.model.backbone;
    b.seed = count(r, "backbone.seed");
    b.layers = count(r, "backbone.layers");
    b.dim = positive(r, "backbone.dim");
    b.frame = positive(r, "backbone.frame");
    b.hop = positive(r, "backbone.hop");
    b.fft_size = positive(r, "backbone.fft_size");
    b.trainable = flag(r, "backbone.trainable");
    if (b.fft_size < b.frame)
        throw ConfigError("backbone.fft_size", "must be at least the frame length");

    c.model.n_experts = positive(r, "moe.n_experts");
    c.model.top_k = positive(r, "moe.top_k");
    if (c.model.top_k > c.model.n_experts)
        throw ConfigError("moe.top_k", "K=" + std::to_string(c.model.top_k) + " exceeds n_experts=" +
                                           std::to_string(c.model.n_experts));
    c.model.expert_hidden = positive(r, "moe.expert_hidden");
    c.model.dense = flag(r, "moe.dense");
    c.training.balancing = flag(r, "moe.balancing_loss_enabled");
    c.training.balancing_alpha = number(r, "moe.balancing_alpha");
    if (c.training.balancing_alpha < 0.0)
        throw ConfigError("moe.balancing_alpha", "must be non-negative");
    if (c.training.balancing && c.model.effective_k() != 1 && !c.model.dense)
        throw ConfigError("moe.balancing_loss_enabled", "the balancing loss needs top_k = 1 or dense routing");

    if (count(r, "stft.window") != b.frame)
        throw ConfigError("stft.window", "must equal backbone.frame so SE spectra align with the routed frames");
    if (count(r, "stft.hop") != b.hop)
        throw ConfigError("stft.hop", "must equal backbone.hop so SE spectra align with the routed frames");
    if (count(r, "stft.fft_size") != b.fft_size)
        throw ConfigError("stft.fft_size", "must equal backbone.fft_size");

    if (count(r, "ser.classes") != kEmotionClasses)
        throw ConfigError("ser.classes", "must be " + std::to_string(kEmotionClasses));
    c.model.ser_hidden = positive(r, "ser.hidden");
    c.model.se_hidden = positive(r, "se.hidden");
    const std::string init = get<std::string>(at(r, "se.init"), "se.init");
    if (init == "identity")
        c.model.se_init = SeInit::Identity;
    else if (init == "random")
        c.model.se_init = SeInit::Random;
    else
        throw ConfigError("se.init", "expected identity or random");
    if (c.model.se_init == SeInit::Identity && c.model.se_hidden < b.stft().bins())
        throw ConfigError("se.hidden", "identity init needs at least " + std::to_string(b.stft().bins()) +
                                           " hidden units");

    TrainingConfig& t = c.training;
    t.phase1_se = head_phase(r, "training.phase1.se");
    t.phase1_ser = head_phase(r, "training.phase1.ser");
    t.phase2_epochs = count(r, "training.phase2.epochs");
    t.phase2_batch = positive(r, "training.phase2.batch");
    t.lr_model = rate(r, "training.lr_model");
    t.lr_backbone = rate(r, "training.lr_backbone");
    t.adamw.beta1 = number(r, "training.adamw.beta1");
    t.adamw.beta2 = number(r, "training.adamw.beta2");
    t.adamw.eps = rate(r, "training.adamw.eps");
    t.adamw.weight_decay = number(r, "training.adamw.weight_decay");
    if (!(t.adamw.beta1 >= 0.0 && t.adamw.beta1 < 1.0))
        throw ConfigError("training.adamw.beta1", "must lie in [0, 1)");
    if (!(t.adamw.beta2 >= 0.0 && t.adamw.beta2 < 1.0))
        throw ConfigError("training.adamw.beta2", "must lie in [0, 1)");
    if (t.adamw.weight_decay < 0.0)
        throw ConfigError("training.adamw.weight_decay", "must be non-negative");
    t.ser_loss = flag(r, "training.ser_loss");
    t.se_loss = flag(r, "training.se_loss");
    if (!t.ser_loss && !t.se_loss)
        throw ConfigError("training.ser_loss", "at least one of ser_loss and se_loss must be enabled");
    t.early_stopping = flag(r, "training.early_stopping");

    DataConfig& d = c.data;
    d.sample_rate = rate(r, "data.sample_rate");
    d.utterance_samples = positive(r, "data.utterance_samples");
    d.train = positive(r, "data.train");
    d.dev = positive(r, "data.dev");
    d.test = positive(r, "data.test");
    const json& props = at(r, "data.class_proportions");
    if (!props.is_array() || props.size() != kEmotionClasses)
        throw ConfigError("data.class_proportions", "expected " + std::to_string(kEmotionClasses) + " numbers");
    for (std::size_t i = 0; i < kEmotionClasses; ++i) {
        if (!props[i].is_number() || !(props[i].get<double>() > 0.0))
            throw ConfigError("data.class_proportions", "entries must be positive numbers");
        d.class_proportions[i] = props[i].get<double>();
    }
    if (d.utterance_samples < b.frame + b.hop)
        throw ConfigError("data.utterance_samples", "utterances need at least two frames");
    c.train_family = family(at(r, "data.train_family"), "data.train_family");
    c.train_snr_db = number(r, "data.train_snr_db");

    const json& families = at(r, "eval.families");
    if (!families.is_array() || families.empty())
        throw ConfigError("eval.families", "expected a non-empty list");
    for (const auto& f : families)
        c.eval.families.push_back(family(f, "eval.families"));
    const json& snrs = at(r, "eval.snr_db");
    if (!snrs.is_array() || snrs.empty())
        throw ConfigError("eval.snr_db", "expected a non-empty list");
    for (const auto& s : snrs) {
        if (!s.is_number())
            throw ConfigError("eval.snr_db", "expected numbers");
        c.eval.snr_db.push_back(s.get<double>());
    }

    c.ssnr.frame = positive(r, "ssnr.frame");
    c.ssnr.hop = positive(r, "ssnr.hop");
    c.ssnr.floor_db = number(r, "ssnr.floor_db");
    c.ssnr.ceil_db = number(r, "ssnr.ceil_db");
    if (!(c.ssnr.floor_db < c.ssnr.ceil_db))
        throw ConfigError("ssnr.floor_db", "must be below ssnr.ceil_db");
    if (c.ssnr.frame > d.utterance_samples)
        throw ConfigError("ssnr.frame", "longer than an utterance");

    for (const auto& v : at(r, "ablate.routing")) {
        const std::string s = get<std::string>(v, "ablate.routing");
        if (s != "sparse" && s != "dense")
            throw ConfigError("ablate.routing", "expected sparse or dense, got '" + s + "'");
        c.ablate.routing.push_back(s);
    }
    for (const auto& v : at(r, "ablate.n_experts")) {
        if (!v.is_number_integer() || v.get<long long>() < 1)
            throw ConfigError("ablate.n_experts", "expected positive integers");
        c.ablate.n_experts.push_back(v.get<std::size_t>());
    }
    for (const auto& v : at(r, "ablate.balancing"))
        c.ablate.balancing.push_back(get<bool>(v, "ablate.balancing"));

    c.gradcheck.utterances = positive(r, "gradcheck.utterances");
    c.gradcheck.samples = positive(r, "gradcheck.samples");
    c.gradcheck.step = rate(r, "gradcheck.step");
    c.gradcheck.tolerance = rate(r, "gradcheck.tolerance");
    c.gradcheck.backbone_trainable = flag(r, "gradcheck.backbone_trainable");
    c.gradcheck.balancing = flag(r, "gradcheck.balancing");
    if (c.gradcheck.samples < b.frame + b.hop)
        throw ConfigError("gradcheck.samples", "needs at least two frames");
    return c;
}

json load_config_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("<file>", "cannot open " + path.string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded())
        throw ConfigError("<file>", path.string() + " is not valid JSON");
    return j;
}

std::string config_digest(const json& resolved)
{
    const std::string text = resolved.dump();
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ull;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace merit
