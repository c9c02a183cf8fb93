#pragma once

#include "merit/config.hpp"
#include "merit/experiment.hpp"

#include <string>
#include <vector>

namespace fixture {

/// Toy preset shrunk to a few dozen utterances.
inline nlohmann::json small_tree(std::vector<std::string> extra = {})
{
    std::vector<std::string> o{"data.train=48", "data.dev=16", "data.test=16", "eval.families=[\"babble\"]",
                               "eval.snr_db=[5]", "training.phase2.epochs=2"};
    o.insert(o.end(), extra.begin(), extra.end());
    return merit::resolve_config(nullptr, o);
}

inline merit::ExperimentConfig small_config(std::vector<std::string> extra = {})
{
    return merit::parse_config(small_tree(std::move(extra)));
}

inline merit::Dataset small_dataset(const merit::ExperimentConfig& cfg)
{
    return merit::build_dataset(cfg, merit::corpus_files(cfg, merit::make_corpus(cfg)));
}

}  // namespace fixture
