#include "invp/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <numeric>
#include <optional>
#include <random>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "invp/discovery.hpp"
#include "invp/error.hpp"
#include "invp/log.hpp"
#include "invp/mining.hpp"
#include "invp/parallel.hpp"

#ifndef INVP_VERSION
#define INVP_VERSION "0.0.0"
#endif

namespace invp::cli {

namespace fs = std::filesystem;

namespace {

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) return {};
    const auto last = s.find_last_not_of(" \t\r");
    return s.substr(first, last - first + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string part;
    std::istringstream in(s);
    while (std::getline(in, part, sep)) {
        part = trim(part);
        if (!part.empty()) out.push_back(part);
    }
    return out;
}

std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

[[noreturn]] void bad_value(const std::string& key, const std::string& value, const std::string& expected) {
    throw ConfigError(key + ": invalid value '" + value + "' (expected " + expected + ")");
}

Index as_count(const std::string& key, const std::string& value) {
    unsigned long long out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "a non-negative integer");
    return static_cast<Index>(out);
}

long as_long(const std::string& key, const std::string& value) {
    long out = 0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size()) bad_value(key, value, "an integer");
    return out;
}

double as_real(const std::string& key, const std::string& value) {
    double out = 0.0;
    const auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
    if (ec != std::errc() || ptr != value.data() + value.size() || !std::isfinite(out)) bad_value(key, value, "a real number");
    return out;
}

bool as_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    bad_value(key, value, "true or false");
}

std::string schedule_name(Schedule s) {
    switch (s) {
        case Schedule::constant: return "constant";
        case Schedule::step: return "step";
        case Schedule::cosine: return "cosine";
    }
    return "cosine";
}

bool is_synthetic(const std::string& dataset) { return dataset == "gauss" || dataset == "moons"; }

std::string timestamp() {
    const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char buf[32];
    std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
}

}  // namespace

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    std::string section;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']') throw ConfigError("config line " + std::to_string(line_no) + ": malformed section header");
            section = trim(line.substr(1, line.size() - 2));
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
        const std::string key = trim(line.substr(0, eq));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        out[section.empty() ? key : section + "." + key] = trim(line.substr(eq + 1));
    }
    return out;
}

void apply_settings(RunConfig& c, const std::map<std::string, std::string>& settings) {
    auto& t = c.train;
    auto& o = t.optimizer;
    for (const auto& [key, value] : settings) {
        if (key == "train.k") t.k = as_count(key, value);
        else if (key == "train.l") t.l = as_count(key, value);
        else if (key == "train.P") t.P = as_count(key, value);
        else if (key == "train.M") t.M = as_count(key, value);
        else if (key == "train.tau") {
            if (value == "default") t.tau.reset();
            else t.tau = as_real(key, value);
        } else if (key == "train.lambda_inv") t.lambda_inv = as_real(key, value);
        else if (key == "train.ramp_T") {
            if (value == "auto") {
                t.T_ramp_auto = true;
            } else {
                t.T_ramp_auto = false;
                t.T_ramp = as_long(key, value);
            }
        } else if (key == "train.epochs") t.epochs = as_long(key, value);
        else if (key == "train.batch_size") t.batch_size = as_count(key, value);
        else if (key == "train.bank_momentum") t.bank_momentum = as_real(key, value);
        else if (key == "train.strategy") {
            try {
                t.strategy = parse_strategy(value);
            } catch (const ConfigError&) {
                bad_value(key, value, "invp, knn_baseline, no_hard_positive or no_hard_negative");
            }
        } else if (key == "train.background") {
            if (value == "approximate") t.background_mode = BackgroundMode::approximate_background;
            else if (value == "exact") t.background_mode = BackgroundMode::exact_background;
            else bad_value(key, value, "approximate or exact");
        } else if (key == "train.knn_K") t.knn_K = as_count(key, value);
        else if (key == "train.dim") t.embedding_dim = as_count(key, value);
        else if (key == "train.hidden") {
            t.hidden.clear();
            for (const auto& w : split(value, ',')) t.hidden.push_back(as_count(key, w));
        } else if (key == "train.head") {
            if (value != "linear" && value != "mlp") bad_value(key, value, "linear or mlp");
            t.head = parse_head(value);
        } else if (key == "train.standardize") t.standardize = as_bool(key, value);
        else if (key == "train.seed") t.seed = as_count(key, value);
        else if (key == "optimizer.lr") o.learning_rate = as_real(key, value);
        else if (key == "optimizer.momentum") o.momentum = as_real(key, value);
        else if (key == "optimizer.weight_decay") o.weight_decay = as_real(key, value);
        else if (key == "optimizer.schedule") {
            if (value == "constant") o.schedule = Schedule::constant;
            else if (value == "step") o.schedule = Schedule::step;
            else if (value == "cosine") o.schedule = Schedule::cosine;
            else bad_value(key, value, "constant, step or cosine");
        } else if (key == "optimizer.step_every") o.step_every = as_long(key, value);
        else if (key == "optimizer.step_gamma") o.step_gamma = as_real(key, value);
        else if (key == "data.dataset") {
            if (value.empty()) bad_value(key, value, "gauss, moons, idx:PATH or table:PATH");
            c.dataset = value;
        } else if (key == "data.label_column") c.label_column = as_bool(key, value);
        else if (key == "data.classes") c.classes = as_count(key, value);
        else if (key == "data.per_class") c.per_class = as_count(key, value);
        else if (key == "data.dim") c.input_dim = as_count(key, value);
        else if (key == "data.separation") c.separation = as_real(key, value);
        else if (key == "data.gap") c.gap = as_real(key, value);
        else if (key == "data.noise") c.noise = as_real(key, value);
        else if (key == "eval.K") c.knn_eval_K = as_count(key, value);
        else if (key == "eval.probe_epochs") c.probe.epochs = as_long(key, value);
        else if (key == "eval.probe_lr") c.probe.learning_rate = as_real(key, value);
        else if (key == "eval.probe_batch") c.probe.batch_size = as_count(key, value);
        else if (key == "eval.stats_per_anchor") c.stats_per_anchor = as_count(key, value);
        else if (key == "eval.stats_neg_pool") c.stats_neg_pool = as_count(key, value);
        else if (key == "ablate.strategies") {
            c.strategies.clear();
            for (const auto& s : split(value, ',')) {
                try {
                    c.strategies.push_back(parse_strategy(s));
                } catch (const ConfigError&) {
                    bad_value(key, s, "a strategy name");
                }
            }
        } else if (key == "run.out") c.out = value;
        else if (key == "run.workers") c.workers = as_count(key, value);
        else throw ConfigError("unknown setting '" + key + "'");
    }
    c.probe.seed = derive_seed(t.seed, seed_eval);
}

std::string render_config(const RunConfig& c) {
    const auto& t = c.train;
    const auto& o = t.optimizer;
    std::ostringstream out;
    std::string hidden;
    for (std::size_t i = 0; i < t.hidden.size(); ++i) hidden += (i ? "," : "") + std::to_string(t.hidden[i]);
    std::string strategies;
    for (std::size_t i = 0; i < c.strategies.size(); ++i) strategies += (i ? "," : "") + to_string(c.strategies[i]);
    out << "[train]\n"
        << "k = " << t.k << "\nl = " << t.l << "\nP = " << t.P << "\nM = " << t.M << "\ntau = "
        << (t.tau ? format_double(*t.tau) : "default") << "\nlambda_inv = " << format_double(t.lambda_inv)
        << "\nramp_T = " << (t.T_ramp_auto ? std::string("auto") : std::to_string(t.T_ramp)) << "\nepochs = " << t.epochs
        << "\nbatch_size = " << t.batch_size << "\nbank_momentum = " << format_double(t.bank_momentum)
        << "\nstrategy = " << to_string(t.strategy) << "\nbackground = "
        << (t.background_mode == BackgroundMode::approximate_background ? "approximate" : "exact")
        << "\nknn_K = " << t.knn_K << "\ndim = " << t.embedding_dim << "\nhidden = " << hidden
        << "\nhead = " << to_string(t.head) << "\nstandardize = " << (t.standardize ? "true" : "false")
        << "\nseed = " << t.seed << "\n\n[optimizer]\nlr = " << format_double(o.learning_rate)
        << "\nmomentum = " << format_double(o.momentum) << "\nweight_decay = " << format_double(o.weight_decay)
        << "\nschedule = " << schedule_name(o.schedule) << "\nstep_every = " << o.step_every
        << "\nstep_gamma = " << format_double(o.step_gamma) << "\n\n[data]\ndataset = " << c.dataset
        << "\nlabel_column = " << (c.label_column ? "true" : "false") << "\nclasses = " << c.classes
        << "\nper_class = " << c.per_class << "\ndim = " << c.input_dim << "\nseparation = " << format_double(c.separation)
        << "\ngap = " << format_double(c.gap) << "\nnoise = " << format_double(c.noise) << "\n\n[eval]\nK = " << c.knn_eval_K
        << "\nprobe_epochs = " << c.probe.epochs << "\nprobe_lr = " << format_double(c.probe.learning_rate)
        << "\nprobe_batch = " << c.probe.batch_size << "\nstats_per_anchor = " << c.stats_per_anchor
        << "\nstats_neg_pool = " << c.stats_neg_pool << "\n\n[ablate]\nstrategies = " << strategies
        << "\n\n[run]\nout = " << c.out.string() << "\nworkers = " << c.workers << '\n';
    return out.str();
}

namespace {

Index held_out_per_class(Index per_class) { return std::max<Index>(10, per_class / 5); }

// Rows [c*total, c*total + keep) of each class block.
Dataset take_class_blocks(const Dataset& all, Index classes, Index total, Index offset, Index count) {
    Dataset out;
    out.name = all.name;
    out.seed = all.seed;
    out.inputs.resize(static_cast<Eigen::Index>(classes * count), all.inputs.cols());
    out.labels.emplace();
    for (Index c = 0; c < classes; ++c) {
        for (Index s = 0; s < count; ++s) {
            const auto src = static_cast<Eigen::Index>(c * total + offset + s);
            out.inputs.row(static_cast<Eigen::Index>(c * count + s)) = all.inputs.row(src);
            out.labels->push_back((*all.labels)[static_cast<std::size_t>(src)]);
        }
    }
    return out;
}

Dataset subset(const Dataset& all, const std::vector<Index>& rows) {
    Dataset out;
    out.name = all.name;
    out.seed = all.seed;
    out.inputs.resize(static_cast<Eigen::Index>(rows.size()), all.inputs.cols());
    if (all.labels) out.labels.emplace();
    for (std::size_t r = 0; r < rows.size(); ++r) {
        out.inputs.row(static_cast<Eigen::Index>(r)) = all.inputs.row(static_cast<Eigen::Index>(rows[r]));
        if (all.labels) out.labels->push_back((*all.labels)[rows[r]]);
    }
    return out;
}

Dataset load_external(const RunConfig& c) {
    if (c.dataset.rfind("idx:", 0) == 0) {
        const auto parts = split(c.dataset.substr(4), ',');
        if (parts.empty()) throw ConfigError("data.dataset: idx needs an image file path");
        for (const auto& p : parts) {
            if (!fs::exists(p)) throw ConfigError("data.dataset: file not found: " + p);
        }
        return parts.size() == 1 ? load_idx(parts[0]) : load_idx_pair(parts[0], parts[1]);
    }
    if (c.dataset.rfind("table:", 0) == 0) {
        const std::string path = c.dataset.substr(6);
        if (path.empty()) throw ConfigError("data.dataset: table needs a file path");
        if (!fs::exists(path)) throw ConfigError("data.dataset: file not found: " + path);
        return load_table(path, c.label_column);
    }
    throw ConfigError("data.dataset: unknown dataset '" + c.dataset + "' (expected gauss, moons, idx:PATH or table:PATH)");
}

Dataset synthetic_draw(const RunConfig& c) {
    const Index total = c.per_class + held_out_per_class(c.per_class);
    const std::uint64_t seed = derive_seed(c.train.seed, seed_data);
    if (c.dataset == "gauss") return gen_gaussian_mixture(c.classes, total, c.input_dim, c.separation, seed);
    return gen_two_manifolds(total, c.input_dim, c.gap, c.noise, seed);
}

Index synthetic_classes(const RunConfig& c) { return c.dataset == "gauss" ? c.classes : 2; }

std::vector<Index> split_order(const RunConfig& c, Index n) {
    std::vector<Index> order(n);
    std::iota(order.begin(), order.end(), Index{0});
    std::mt19937_64 rng(derive_seed(c.train.seed, seed_eval, 1));
    std::shuffle(order.begin(), order.end(), rng);
    return order;
}

}  // namespace

Dataset load_dataset(const RunConfig& c, bool held_out) {
    if (is_synthetic(c.dataset)) {
        const Dataset all = synthetic_draw(c);
        const Index total = c.per_class + held_out_per_class(c.per_class);
        return held_out ? take_class_blocks(all, synthetic_classes(c), total, c.per_class, total - c.per_class)
                        : take_class_blocks(all, synthetic_classes(c), total, 0, c.per_class);
    }
    Dataset all = load_external(c);
    if (!held_out) return all;
    const auto order = split_order(c, all.size());
    return subset(all, std::vector<Index>(order.begin() + static_cast<std::ptrdiff_t>(all.size() * 4 / 5), order.end()));
}

std::pair<Dataset, Dataset> evaluation_split(const RunConfig& c) {
    if (is_synthetic(c.dataset)) return {load_dataset(c, false), load_dataset(c, true)};
    Dataset all = load_external(c);
    if (!all.labels) throw ConfigError("data.dataset: evaluation needs labels");
    const auto order = split_order(c, all.size());
    const auto cut = static_cast<std::ptrdiff_t>(all.size() * 4 / 5);
    return {subset(all, std::vector<Index>(order.begin(), order.begin() + cut)),
            subset(all, std::vector<Index>(order.begin() + cut, order.end()))};
}

namespace {

struct Common {
    std::string config_path;
    std::map<std::string, std::string> flags;
    std::vector<std::string> sets;
};

struct FlagSpec {
    const char* flag;
    const char* key;
    const char* help;
};

constexpr FlagSpec kFlags[] = {
    {"--seed", "train.seed", "root seed"},
    {"--out", "run.out", "output directory"},
    {"--strategy", "train.strategy", "invp | knn_baseline | no_hard_positive | no_hard_negative"},
    {"--k", "train.k", "kNN graph fan-out"},
    {"--l", "train.l", "propagation depth"},
    {"--P", "train.P", "hard positives per anchor"},
    {"--M", "train.M", "background size (clamped to n-1)"},
    {"--tau", "train.tau", "temperature"},
    {"--lambda-inv", "train.lambda_inv", "weight of the propagation loss"},
    {"--ramp-T", "train.ramp_T", "ramp threshold epoch, or auto"},
    {"--epochs", "train.epochs", "training epochs"},
    {"--batch-size", "train.batch_size", "batch size"},
    {"--head", "train.head", "linear | mlp"},
    {"--dim", "train.dim", "embedding dimension"},
    {"--hidden", "train.hidden", "hidden widths, comma separated"},
    {"--lr", "optimizer.lr", "learning rate"},
    {"--workers", "run.workers", "worker thread cap (0 = all cores)"},
    {"--dataset", "data.dataset", "gauss | moons | idx:IMAGES[,LABELS] | table:PATH"},
};

void add_common(CLI::App* app, Common& common) {
    app->add_option("--config", common.config_path, "config file (key = value with [sections])");
    for (const auto& spec : kFlags) {
        app->add_option(spec.flag, common.flags[spec.key], spec.help)->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }
    app->add_option("--set", common.sets, "override any setting: section.key=value");
}

RunConfig resolve(const CLI::App* app, const Common& common) {
    RunConfig config;
    std::map<std::string, std::string> settings;
    if (!common.config_path.empty()) {
        std::ifstream in(common.config_path);
        if (!in) throw ConfigError("--config: cannot read " + common.config_path);
        std::stringstream text;
        text << in.rdbuf();
        settings = parse_config_text(text.str());
    }
    for (const auto& spec : kFlags) {
        if (app->count(spec.flag) > 0) settings[spec.key] = common.flags.at(spec.key);
    }
    for (const auto& s : common.sets) {
        const auto eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set: expected section.key=value, got '" + s + "'");
        settings[trim(s.substr(0, eq))] = trim(s.substr(eq + 1));
    }
    apply_settings(config, settings);
    set_worker_count(config.workers);
    return config;
}

std::string hex64(std::uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

void write_manifest(const RunConfig& config, const Dataset& data, const fs::path& out, const std::string& started,
                    const std::string& finished, const std::vector<std::string>& artifacts) {
    nlohmann::ordered_json m;
    m["code_version"] = INVP_VERSION;
    m["seed"] = config.train.seed;
    m["output_directory"] = config.out.string();
    m["dataset"] = {{"descriptor", config.dataset}, {"rows", data.size()}, {"columns", data.dim()},
                    {"content_hash", hex64(content_hash(data))}};
    m["config"] = render_config(config);
    m["artifacts"] = artifacts;
    m["started"] = started;
    if (!finished.empty()) m["finished"] = finished;
    std::ofstream(out / "manifest.json") << m.dump(2) << '\n';
}

Dataset drop_labels(Dataset d) {
    d.labels.reset();
    return d;
}

int cmd_train(const RunConfig& config, const std::string& resume_dir, long stop_after) {
    // training never sees labels
    const Dataset data = drop_labels(load_dataset(config));
    const fs::path out = config.out;
    fs::create_directories(out);
    const std::vector<std::string> artifacts{"manifest.json", "metrics.ndjson", "timing.log", "encoder.ivpe", "bank.ivpb",
                                             "checkpoint/encoder.ivpe", "checkpoint/bank.ivpb", "checkpoint/progress.json"};
    const std::string started = timestamp();
    write_manifest(config, data, out, started, "", artifacts);

    std::optional<Trainer> trainer;
    if (resume_dir.empty()) {
        trainer.emplace(data.inputs, config.train);
    } else {
        trainer.emplace(Trainer::resume(resume_dir, data.inputs, config.train));
    }
    const auto mode = resume_dir.empty() ? std::ios::trunc : std::ios::app;
    std::ofstream metrics(out / "metrics.ndjson", mode);
    std::ofstream timing(out / "timing.log", mode);
    const long last = stop_after > 0 ? std::min(stop_after, config.train.epochs) : config.train.epochs;
    while (trainer->completed_epochs() < last) {
        const auto report = trainer->run_epoch();
        if (!report) break;
        metrics << metrics_record(*report) << '\n';
        metrics.flush();
        timing << report->epoch << ' ' << report->wall_seconds << '\n';
        std::cout << "epoch " << report->epoch << " loss " << report->loss_total << " (ins " << report->loss_ins << ", inv "
                  << report->loss_inv << ") |N| " << report->mean_positives << '\n';
    }
    trainer->save_checkpoint(out / "checkpoint");
    save_encoder(out / "encoder.ivpe", trainer->encoder(), 1);
    trainer->bank().save(out / "bank.ivpb", 1);
    write_manifest(config, data, out, started, timestamp(), artifacts);
    return 0;
}

std::vector<int> labels_of(const Dataset& d) {
    if (!d.labels) throw ConfigError("data.dataset: evaluation needs labels (use a labeled dataset or data.label_column)");
    return *d.labels;
}

EncoderState load_checkpoint_for(const fs::path& path, Index input_dim) {
    if (!fs::exists(path)) throw ConfigError("--checkpoint: file not found: " + path.string());
    EncoderState encoder = load_encoder(path);
    if (encoder.input_dim() != input_dim) {
        throw CheckpointError("--checkpoint: encoder expects " + std::to_string(encoder.input_dim()) + " inputs, dataset has " +
                              std::to_string(input_dim));
    }
    return encoder;
}

int cmd_eval(const RunConfig& config, const fs::path& checkpoint) {
    auto [train_set, test_set] = evaluation_split(config);
    const auto train_labels = labels_of(train_set);
    const auto test_labels = labels_of(test_set);
    const EncoderState encoder = load_checkpoint_for(checkpoint, train_set.dim());
    const Matrix train_features = encode(encoder, train_set.inputs);
    const Matrix test_features = encode(encoder, test_set.inputs);

    const double knn = knn_classify(train_features, train_labels, test_features, test_labels,
                                    std::min<Index>(config.knn_eval_K, train_set.size()));
    const ProbeResult probe = linear_probe(train_features, train_labels, test_features, test_labels, config.probe);
    const SimilarityStats stats = similarity_stats(train_features, train_labels, config.stats_per_anchor, config.stats_neg_pool,
                                                   derive_seed(config.train.seed, seed_eval, 2));
    fs::create_directories(config.out);
    nlohmann::ordered_json report;
    report["checkpoint"] = checkpoint.string();
    report["knn_K"] = config.knn_eval_K;
    report["knn_accuracy"] = knn;
    report["probe_train_accuracy"] = probe.train_accuracy;
    report["probe_test_accuracy"] = probe.test_accuracy;
    report["same_class_mean"] = stats.same_mean;
    report["cross_class_mean"] = stats.cross_mean;
    report["overlap_coefficient"] = stats.overlap_coefficient;
    std::ofstream(config.out / "eval.json") << report.dump(2) << '\n';
    std::ofstream stats_out(config.out / "similarity_stats.json");
    write_similarity_stats(stats_out, stats);
    std::cout << "knn accuracy " << knn << "\nprobe accuracy " << probe.test_accuracy << "\noverlap " << stats.overlap_coefficient << '\n';
    return 0;
}

int cmd_mine(const RunConfig& config, const fs::path& bank_path, const fs::path& checkpoint, bool dump_neighbors) {
    EmbeddingBank bank;
    if (!bank_path.empty()) {
        if (!fs::exists(bank_path)) throw ConfigError("--bank: file not found: " + bank_path.string());
        bank = EmbeddingBank::load(bank_path);
    } else {
        const Dataset data = drop_labels(load_dataset(config));
        const EncoderState encoder = load_checkpoint_for(checkpoint, data.dim());
        bank = EmbeddingBank::from_rows(encode(encoder, data.inputs), config.train.bank_momentum);
    }
    const auto& t = config.train;
    const Index n = bank.size();
    if (t.k >= n) throw ConfigError("train.k: must be smaller than the sample count " + std::to_string(n));
    const Index M = t.effective_M(n);
    Index k_max = std::max(t.k, M);
    if (t.strategy == Strategy::knn_baseline) k_max = std::max(k_max, std::min(t.effective_knn_K(), n - 1));
    const NeighborTable table = topk_all(bank, k_max);

    fs::create_directories(config.out);
    if (dump_neighbors) {
        std::ofstream nb(config.out / "neighbors.txt");
        write_neighbors(nb, table);
    }
    std::ofstream positives(config.out / "positives.txt");
    std::ofstream mined(config.out / "mined.txt");
    auto join = [](std::ostream& out, const std::vector<Index>& v) {
        for (Index j : v) out << ' ' << j;
        out << '\n';
    };
    for (Index i = 0; i < n; ++i) {
        const PositiveSet pos = t.strategy == Strategy::knn_baseline ? knn_baseline(table, i, std::min(t.effective_knn_K(), k_max))
                                                                     : propagate(table, i, t.k, t.l);
        positives << i << ':';
        join(positives, pos.members);
        mined << i << ':';
        join(mined, pos.members);
        if (pos.members.empty()) {
            mined << "H:\nB:\n";
            continue;
        }
        const auto hard = hard_positives(bank, i, pos, t.P);
        const MinedSets sets = build_background(table, i, pos, hard, M, t.background_mode);
        mined << "H:";
        join(mined, sets.hard_positives);
        mined << "B:";
        join(mined, sets.background);
    }
    std::cout << "mined " << n << " anchors into " << config.out.string() << '\n';
    return 0;
}

int cmd_ablate(RunConfig config) {
    auto strategies = config.strategies;
    if (strategies.empty()) {
        strategies = {Strategy::invp, Strategy::no_hard_negative, Strategy::no_hard_positive, Strategy::knn_baseline};
    }
    std::set<Strategy> unique(strategies.begin(), strategies.end());
    if (unique.size() != strategies.size()) throw ConfigError("ablate.strategies: duplicate strategy names");
    if (strategies.size() < 2) throw ConfigError("ablate.strategies: need at least two strategies");
    // invp runs first so the KNN baseline can match its positive-set size
    std::stable_partition(strategies.begin(), strategies.end(), [](Strategy s) { return s == Strategy::invp; });

    auto [train_set, test_set] = evaluation_split(config);
    const auto train_labels = labels_of(train_set);
    const auto test_labels = labels_of(test_set);
    const std::uint64_t data_hash = content_hash(train_set);
    fs::create_directories(config.out);

    std::vector<StrategyResult> results;
    double invp_mean_positives = 0.0;
    for (Strategy s : strategies) {
        TrainConfig tc = config.train;
        tc.strategy = s;
        if (s == Strategy::knn_baseline && tc.knn_K == 0 && invp_mean_positives > 0.0) {
            tc.knn_K = std::clamp<Index>(static_cast<Index>(std::lround(invp_mean_positives)), 1, train_set.size() - 1);
        }
        const fs::path dir = config.out / to_string(s);
        fs::create_directories(dir);
        std::ofstream metrics(dir / "metrics.ndjson");
        const TrainResult run = train(train_set.inputs, tc, [&](const EpochReport& r) { metrics << metrics_record(r) << '\n'; });
        if (s == Strategy::invp) {
            double sum = 0.0;
            long count = 0;
            for (const auto& r : run.reports) {
                if (r.ramp == 1) {
                    sum += r.mean_positives;
                    ++count;
                }
            }
            invp_mean_positives = count ? sum / static_cast<double>(count) : 0.0;
        }
        save_encoder(dir / "encoder.ivpe", run.encoder, 1);
        const double acc = knn_classify(encode(run.encoder, train_set.inputs), train_labels, encode(run.encoder, test_set.inputs),
                                        test_labels, std::min<Index>(config.knn_eval_K, train_set.size()));
        std::cout << to_string(s) << ": knn accuracy " << acc << '\n';
        results.push_back({to_string(s), acc, data_hash, config.train.seed});
    }
    const AblationReport report = ablation_report(results);
    std::ofstream(config.out / "ablation.txt") << report.table;
    std::ofstream(config.out / "ablation.json") << report.json << '\n';
    std::cout << report.table;
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app("Invariance propagation: contrastive training with kNN-graph positives", "invp");
    app.require_subcommand(1);
    Common common;
    std::string resume_dir;
    long stop_after = 0;
    std::string checkpoint;
    std::string bank_path;
    bool dump_neighbors = false;

    auto* train_cmd = app.add_subcommand("train", "train an encoder and memory bank");
    add_common(train_cmd, common);
    train_cmd->add_option("--resume", resume_dir, "checkpoint directory to continue from");
    train_cmd->add_option("--stop-after", stop_after, "stop (and checkpoint) after this epoch");

    auto* eval_cmd = app.add_subcommand("eval", "evaluate frozen features of a checkpoint");
    add_common(eval_cmd, common);
    eval_cmd->add_option("--checkpoint", checkpoint, "encoder checkpoint (default OUT/encoder.ivpe)");

    auto* mine_cmd = app.add_subcommand("mine", "dump neighbors, positive sets and mined sets");
    add_common(mine_cmd, common);
    mine_cmd->add_option("--bank", bank_path, "bank file to mine");
    mine_cmd->add_option("--checkpoint", checkpoint, "encoder checkpoint; features of the dataset form the bank");
    mine_cmd->add_flag("--dump-neighbors", dump_neighbors, "also write neighbors.txt");

    auto* ablate_cmd = app.add_subcommand("ablate", "compare strategies on shared data and seeds");
    add_common(ablate_cmd, common);
    ablate_cmd->add_option("--strategies", common.flags["ablate.strategies"], "comma separated strategy list");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        CLI::App* active = app.get_subcommands().front();
        RunConfig config = resolve(active, common);
        if (active == ablate_cmd && ablate_cmd->count("--strategies") > 0) {
            apply_settings(config, {{"ablate.strategies", common.flags["ablate.strategies"]}});
        }
        if (active == train_cmd) return cmd_train(config, resume_dir, stop_after);
        if (active == eval_cmd) return cmd_eval(config, checkpoint.empty() ? config.out / "encoder.ivpe" : fs::path(checkpoint));
        if (active == mine_cmd) {
            if (bank_path.empty() && checkpoint.empty()) throw ConfigError("mine: pass --bank or --checkpoint");
            return cmd_mine(config, bank_path, checkpoint, dump_neighbors);
        }
        return cmd_ablate(config);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const ComparisonError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const CheckpointError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const GenerationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
}

int run(int argc, char** argv) {
    std::vector<std::string> args;
    for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
    return run(args);
}

}  // namespace invp::cli
