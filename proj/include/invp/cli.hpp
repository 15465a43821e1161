#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "invp/data.hpp"
#include "invp/eval.hpp"
#include "invp/trainer.hpp"

namespace invp::cli {

// Everything a run needs, resolved from defaults, an optional config file
// and command-line flags (flag > file > default).
struct RunConfig {
    TrainConfig train;

    // gauss | moons | idx:IMAGES[,LABELS] | table:PATH
    std::string dataset = "moons";
    bool label_column = false;
    Index classes = 3;
    Index per_class = 1000;
    Index input_dim = 32;
    double separation = 3.0;
    double gap = 0.3;
    double noise = 0.03;

    Index knn_eval_K = 20;
    ProbeConfig probe;
    Index stats_per_anchor = 5;
    Index stats_neg_pool = 1500;

    std::vector<Strategy> strategies;
    std::filesystem::path out = "run";
    std::size_t workers = 0;
};

// Parses "[section]" / "key = value" text into "section.key" -> value.
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Applies overrides onto config; throws ConfigError naming the field.
void apply_settings(RunConfig& config, const std::map<std::string, std::string>& settings);

// Flat "section.key = value" rendering of a resolved config.
std::string render_config(const RunConfig& config);

// Loads the configured dataset; for synthetic data `held_out` selects the
// evaluation draw.
Dataset load_dataset(const RunConfig& config, bool held_out = false);

// Train and test sets for evaluation: a fresh draw for synthetic data, a
// seeded 80/20 split otherwise. Both carry labels.
std::pair<Dataset, Dataset> evaluation_split(const RunConfig& config);

int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

}  // namespace invp::cli
