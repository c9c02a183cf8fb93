#include "merit/backbone.hpp"

#include "merit/error.hpp"
#include "merit/rng.hpp"

#include <cmath>

namespace merit {

Backbone::Backbone(const BackboneConfig& cfg) : cfg_(cfg)
{
    if (cfg.dim == 0)
        throw Error("backbone dim must be positive");
    Rng rng(cfg.seed);
    const std::size_t bins = cfg.fft_size / 2 + 1;
    projection_ = Parameter("backbone.proj", uniform_tensor(rng, {bins, cfg.dim}, std::sqrt(3.0 / bins)),
                            ParamGroup::Backbone, true);
    const double bound = std::sqrt(6.0 / static_cast<double>(cfg.dim));
    for (std::size_t l = 1; l <= cfg.layers; ++l) {
        const std::string prefix = "backbone.layer" + std::to_string(l);
        weights_.emplace_back(prefix + ".W", uniform_tensor(rng, {cfg.dim, cfg.dim}, bound), ParamGroup::Backbone,
                              !cfg.trainable);
        biases_.emplace_back(prefix + ".b", uniform_tensor(rng, {1, cfg.dim}, 0.1), ParamGroup::Backbone,
                             !cfg.trainable);
    }
}

Tensor Backbone::input_features(const Waveform& w) const
{
    return log1p_spectrum(w, cfg_.stft()).magnitude;
}

std::vector<Var> Backbone::forward(Tape& tape, Var features)
{
    std::vector<Var> out;
    out.reserve(cfg_.layers + 1);
    out.push_back(ad::matmul(features, tape.param(projection_)));
    for (std::size_t l = 0; l < cfg_.layers; ++l)
        out.push_back(ad::relu(ad::affine(out.back(), tape.param(weights_[l]), tape.param(biases_[l]))));
    return out;
}

Var Backbone::forward_concat(Tape& tape, Var features)
{
    const auto layers = forward(tape, features);
    return ad::concat_cols(layers);
}

LayerStack Backbone::synth_layer_stack(const Waveform& w) const
{
    Backbone frozen = *this;
    Tape tape;
    const auto vars = frozen.forward(tape, tape.constant(input_features(w)));
    LayerStack stack;
    for (const Var& v : vars)
        stack.layers.push_back(v.value());
    return stack;
}

std::vector<Parameter*> Backbone::parameters()
{
    std::vector<Parameter*> out{&projection_};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

std::vector<const Parameter*> Backbone::parameters() const
{
    std::vector<const Parameter*> out{&projection_};
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        out.push_back(&weights_[l]);
        out.push_back(&biases_[l]);
    }
    return out;
}

ConcatRepresentation concat_layers(const LayerStack& stack)
{
    if (stack.layers.empty())
        throw ShapeError("concat_layers: empty layer stack");
    const std::size_t t = stack.layers.front().rows();
    const std::size_t d = stack.layers.front().cols();
    for (std::size_t l = 0; l < stack.layers.size(); ++l)
        if (stack.layers[l].rows() != t || stack.layers[l].cols() != d)
            throw ShapeError("concat_layers: layer " + std::to_string(l) + " is " +
                             shape_string(stack.layers[l].shape()) + ", expected [" + std::to_string(t) + "x" +
                             std::to_string(d) + "]");
    Tensor out = Tensor::matrix(t, stack.layers.size() * d);
    for (std::size_t l = 0; l < stack.layers.size(); ++l)
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t c = 0; c < d; ++c)
                out.at(r, l * d + c) = stack.layers[l].at(r, c);
    return {std::move(out)};
}

}  // namespace merit
