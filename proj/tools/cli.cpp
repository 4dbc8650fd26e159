// Copyright (C) 2026 The flexsel Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexsel/cli.hpp"

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "CLI11.hpp"
#include "flexsel/errors.hpp"
#include "flexsel/weight_file.hpp"

namespace flexsel::cli {

namespace fs = std::filesystem;
using nlohmann::json;

NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(DatasetOptions, count)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(ProfileOptions, source, k, weights, pca_components)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TrainOptions, target, train_size, holdout_size, selector, classifier)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(EvalOptions, count, weights)
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(TimingOptions, repetitions, warmup)

void to_json(json& j, const ScorerOptions& s) {
    j = json{{"kind", s.kind}, {"weights", s.weights}, {"layer", nullptr}};
    if (s.layer) {
        j["layer"] = *s.layer;
    }
}

void from_json(const json& j, ScorerOptions& s) {
    s = ScorerOptions{};
    s.kind = j.value("kind", s.kind);
    s.weights = j.value("weights", s.weights);
    if (j.contains("layer") && !j.at("layer").is_null()) {
        s.layer = j.at("layer").get<size_t>();
    }
}

void to_json(json& j, const RunConfig& c) {
    j = json{{"seed", c.seed},         {"haystack", c.haystack}, {"teacher", c.teacher},
             {"dataset", c.dataset},   {"profile", c.profile},   {"max_per_set", c.max_per_set},
             {"selection", c.selection}, {"scorer", c.scorer},   {"selector", c.selector},
             {"model", c.model},       {"train", c.train},       {"eval", c.eval},
             {"flops", c.flops},       {"timing", c.timing}};
}

namespace {

template <class T>
void read_key(const json& j, const char* key, T& value) {
    if (j.contains(key)) {
        j.at(key).get_to(value);
    }
}

// Every key of `given` must name a field of `known`.
void check_known(const json& given, const json& known, const std::string& path) {
    if (!given.is_object() || !known.is_object()) {
        return;
    }
    for (const auto& [key, value] : given.items()) {
        const std::string where = path.empty() ? key : path + "." + key;
        if (!known.contains(key)) {
            throw ConfigError("unknown configuration key '" + where + "'");
        }
        check_known(value, known.at(key), where);
    }
}

}  // namespace

void from_json(const json& j, RunConfig& c) {
    if (!j.is_object()) {
        throw ConfigError("run configuration must be a JSON object");
    }
    c = RunConfig{};
    read_key(j, "seed", c.seed);
    read_key(j, "haystack", c.haystack);
    read_key(j, "teacher", c.teacher);
    read_key(j, "dataset", c.dataset);
    read_key(j, "profile", c.profile);
    read_key(j, "max_per_set", c.max_per_set);
    read_key(j, "selection", c.selection);
    read_key(j, "scorer", c.scorer);
    read_key(j, "selector", c.selector);
    read_key(j, "model", c.model);
    read_key(j, "train", c.train);
    read_key(j, "eval", c.eval);
    read_key(j, "flops", c.flops);
    read_key(j, "timing", c.timing);
    check_known(j, json(c), "");
}

void apply_override(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw UsageError("override '" + assignment + "' is not of the form key.path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }
    json* node = &config;
    std::stringstream keys(path);
    std::string key;
    std::vector<std::string> parts;
    while (std::getline(keys, key, '.')) {
        if (key.empty()) {
            throw UsageError("override key '" + path + "' has an empty component");
        }
        parts.push_back(key);
    }
    for (size_t i = 0; i + 1 < parts.size(); ++i) {
        json& next = (*node)[parts[i]];
        if (next.is_null()) {
            next = json::object();
        }
        if (!next.is_object()) {
            throw UsageError("override key '" + path + "' descends into a non-object");
        }
        node = &next;
    }
    (*node)[parts.back()] = std::move(value);
}

uint64_t config_hash(const json& config) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config.dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

namespace {

std::string hex64(uint64_t v) {
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << v;
    return out.str();
}

struct Run {
    RunConfig config;
    json document;
    std::string hash;
    fs::path out_dir;
    bool timing = false;
    std::ostream* out = nullptr;

    json stamp() const { return {{"seed", config.seed}, {"config_hash", hash}}; }
    std::string csv_preamble() const {
        return "# seed=" + std::to_string(config.seed) + " config_hash=" + hash + "\n";
    }
};

void write_file(const fs::path& path, const std::string& content) {
    std::ofstream file(path, std::ios::binary | std::ios::trunc);
    if (!file) {
        throw IoError("cannot open " + path.string() + " for writing");
    }
    file << content;
    if (!file) {
        throw IoError("failed writing " + path.string());
    }
}

void write_json(const fs::path& path, const json& value) {
    write_file(path, value.dump(2) + "\n");
}

template <class Fn>
double median_seconds(const TimingOptions& options, Fn&& fn) {
    if (options.repetitions < 1) {
        throw ConfigError("timing needs at least one repetition");
    }
    for (size_t i = 0; i < options.warmup; ++i) {
        fn();
    }
    std::vector<double> samples;
    for (size_t i = 0; i < options.repetitions; ++i) {
        const auto start = std::chrono::steady_clock::now();
        fn();
        samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
    }
    std::sort(samples.begin(), samples.end());
    const size_t n = samples.size();
    return n % 2 ? samples[n / 2] : 0.5 * (samples[n / 2 - 1] + samples[n / 2]);
}

Haystack run_haystack(const RunConfig& c) {
    HaystackSpec spec = c.haystack;
    spec.seed = c.seed;
    return build_haystack(spec);
}

ReferenceModel reference_model(const RunConfig& c, const std::string& weights) {
    if (!weights.empty()) {
        return load_reference_model(weights);
    }
    ModelConfig model = c.model;
    model.seed = c.seed;
    return ReferenceModel::init(model);
}

Selector selector_model(const RunConfig& c, const std::string& weights) {
    if (!weights.empty()) {
        return load_selector(weights);
    }
    SelectorConfig config = c.selector;
    config.seed = c.seed;
    return Selector::init(config);
}

double needle_recall(const SelectedTokens& selected, const std::vector<size_t>& relevant) {
    size_t hits = 0;
    for (size_t g : relevant) {
        hits += std::any_of(selected.tokens.begin(), selected.tokens.end(),
                            [g](const SelectedToken& t) { return t.global_index == g; })
                    ? 1
                    : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(relevant.size());
}

void cmd_gen(const Run& run) {
    const RunConfig& c = run.config;
    json items = json::array();
    NamedTensors tensors;
    for (size_t i = 0; i < c.dataset.count; ++i) {
        const HaystackSpec spec = dataset_item_spec(c.haystack, c.seed, i);
        const Haystack h = build_haystack(spec);
        items.push_back({{"index", i},
                         {"seed", spec.seed},
                         {"payload", h.payload},
                         {"needle_frames", h.needle_frames},
                         {"relevant", h.relevant},
                         {"query", h.sequence.query}});
        std::ostringstream name;
        name << "haystack" << std::setw(6) << std::setfill('0') << i << ".visual";
        tensors[name.str()] = h.sequence.visual;
    }
    json header = run.stamp();
    header["kind"] = "haystacks";
    header["haystack"] = c.haystack;
    header["items"] = items;
    save_weight_file(run.out_dir / "haystacks.flxs", header, tensors);
    json summary = run.stamp();
    summary["count"] = c.dataset.count;
    summary["file"] = "haystacks.flxs";
    summary["items"] = items;
    write_json(run.out_dir / "haystacks.json", summary);
    *run.out << summary.dump() << "\n";
}

void cmd_profile(const Run& run) {
    const RunConfig& c = run.config;
    const Haystack h = run_haystack(c);
    AttentionRecord record;
    json info = run.stamp();
    if (c.profile.source == "planted") {
        record = planted_forward(c.teacher.planted_for(h), h.sequence);
        info["peak_layer"] = c.teacher.peak_layer;
    } else if (c.profile.source == "reference") {
        record = reference_model(c, c.profile.weights).forward_with_attention(h.sequence).record;
    } else {
        throw ConfigError("profile source must be 'planted' or 'reference', got '" + c.profile.source + "'");
    }
    const size_t k = c.profile.k ? c.profile.k : h.relevant.size();
    const ProbeResult probe = profile_layers(record, h.relevant, k);
    write_file(run.out_dir / "probe.csv", run.csv_preamble() + probe_csv(probe));

    info["source"] = c.profile.source;
    info["reference_layer"] = probe.reference_layer;
    info["k"] = probe.k;
    info["recall"] = probe.recall;
    info["relevant"] = probe.relevant;
    write_json(run.out_dir / "reference_layer.json", info);

    const PcaResult pca = pca_project(h.sequence.visual, c.profile.pca_components);
    std::ostringstream csv;
    csv.precision(17);
    csv << run.csv_preamble() << "index,frame";
    for (size_t p = 0; p < c.profile.pca_components; ++p) {
        csv << ",pc" << p + 1;
    }
    csv << ",is_relevant\n";
    for (size_t i = 0; i < h.sequence.visual_count(); ++i) {
        csv << i << ',' << h.sequence.frame_index[i];
        for (size_t p = 0; p < c.profile.pca_components; ++p) {
            csv << ',' << pca.projection(i, p);
        }
        csv << ',' << (std::binary_search(h.relevant.begin(), h.relevant.end(), i) ? 1 : 0) << '\n';
    }
    write_file(run.out_dir / "pca.csv", csv.str());
    *run.out << info.dump() << "\n";
}

void cmd_select(const Run& run) {
    const RunConfig& c = run.config;
    const Haystack h = run_haystack(c);
    const PartitionSpec partition{c.haystack.frames, c.max_per_set};
    const size_t layer = c.scorer.layer.value_or(c.teacher.peak_layer);

    std::optional<ReferenceModel> model;
    std::optional<Selector> selector;
    std::unique_ptr<Scorer> scorer;
    if (c.scorer.kind == "planted") {
        scorer = std::make_unique<PlantedScorer>(c.teacher.planted_for(h), layer);
    } else if (c.scorer.kind == "reference") {
        model.emplace(reference_model(c, c.scorer.weights));
        scorer = std::make_unique<ReferenceScorer>(*model, layer);
    } else if (c.scorer.kind == "selector") {
        selector.emplace(selector_model(c, c.scorer.weights));
        scorer = std::make_unique<SelectorScorer>(*selector);
    } else {
        throw ConfigError("scorer kind must be 'planted', 'reference' or 'selector', got '" + c.scorer.kind + "'");
    }

    const SelectedTokens selected = run_training_free(h.sequence, partition, c.selection, *scorer);
    json tokens = json::array();
    for (const SelectedToken& t : selected.tokens) {
        tokens.push_back({{"global_index", t.global_index}, {"score", t.score}, {"set", t.set}});
    }
    json result = run.stamp();
    result["scorer"] = scorer->name();
    result["budget"] = selected.budget;
    result["K"] = selected.set_count;
    result["per_set_k"] = selected.per_set_k;
    result["needle_recall"] = needle_recall(selected, h.relevant);
    result["relevant"] = h.relevant;
    result["selected"] = tokens;
    write_json(run.out_dir / "selected.json", result);

    if (run.timing) {
        if (!model) {
            model.emplace(reference_model(c, ""));
        }
        std::vector<size_t> kept;
        for (const SelectedToken& t : selected.tokens) {
            kept.push_back(t.global_index);
        }
        const TokenSequence reduced = h.sequence.subset(kept);
        const double stage1 = median_seconds(
            c.timing, [&] { run_training_free(h.sequence, partition, c.selection, *scorer); });
        const double stage2 = median_seconds(c.timing, [&] { model->forward_with_attention(reduced); });
        const double full = median_seconds(c.timing, [&] { model->forward_with_attention(h.sequence); });
        json timing = run.stamp();
        timing["repetitions"] = c.timing.repetitions;
        timing["warmup"] = c.timing.warmup;
        timing["stage1_select_seconds"] = stage1;
        timing["stage2_prefill_selected_seconds"] = stage2;
        timing["full_prefill_seconds"] = full;
        write_json(run.out_dir / "timing.json", timing);
    }
    *run.out << json{{"budget", selected.budget}, {"selected", selected.tokens.size()},
                     {"needle_recall", result["needle_recall"]}}.dump()
             << "\n";
}

void cmd_train(const Run& run) {
    const RunConfig& c = run.config;
    json summary = run.stamp();
    summary["target"] = c.train.target;
    if (c.train.target == "selector") {
        const auto train = planted_dataset(c.train.train_size, c.haystack, derive_seed(c.seed, 1), c.teacher);
        const auto holdout = planted_dataset(c.train.holdout_size, c.haystack, derive_seed(c.seed, 2), c.teacher);
        SelectorTrainOptions options = c.train.selector;
        options.seed = c.seed;
        SelectorTrainer trainer(selector_model(c, ""), options, train.size());
        summary["baseline_holdout_spearman"] = mean_spearman(trainer.selector(), holdout);
        trainer.run(train, holdout);
        json header = run.stamp();
        header["kind"] = "selector";
        header["selector"] = trainer.selector().config();
        save_weight_file(run.out_dir / "selector.flxs", header, trainer.selector().weights());
        write_file(run.out_dir / "curve.csv", run.csv_preamble() + curve_csv(trainer.curve()));
        summary["steps"] = trainer.state().step;
        summary["final_holdout_spearman"] = mean_spearman(trainer.selector(), holdout);
        summary["weights"] = "selector.flxs";
    } else if (c.train.target == "reference") {
        HaystackSpec base = c.haystack;
        base.generic_query = true;
        std::vector<LabelledSequence> data;
        for (size_t i = 0; i < c.train.train_size; ++i) {
            const Haystack h = build_haystack(dataset_item_spec(base, derive_seed(c.seed, 1), i));
            data.push_back({h.sequence, h.payload});
        }
        ReferenceModel model = reference_model(c, "");
        ClassifierTrainOptions options = c.train.classifier;
        options.seed = c.seed;
        const auto losses = train_classifier(model, data, options);
        json header = run.stamp();
        header["kind"] = "reference";
        header["model"] = model.config();
        save_weight_file(run.out_dir / "reference.flxs", header, model.weights());
        std::ostringstream csv;
        csv.precision(17);
        csv << run.csv_preamble() << "step,loss\n";
        for (size_t i = 0; i < losses.size(); ++i) {
            csv << i << ',' << losses[i] << '\n';
        }
        write_file(run.out_dir / "curve.csv", csv.str());
        summary["steps"] = losses.size();
        summary["final_loss"] = losses.empty() ? 0.0 : losses.back();
        summary["weights"] = "reference.flxs";
    } else {
        throw ConfigError("train target must be 'selector' or 'reference', got '" + c.train.target + "'");
    }
    write_json(run.out_dir / "train_summary.json", summary);
    *run.out << summary.dump() << "\n";
}

void cmd_eval(const Run& run) {
    const RunConfig& c = run.config;
    const Selector selector = selector_model(c, c.eval.weights);
    const PartitionSpec partition{c.haystack.frames, c.max_per_set};
    std::ostringstream csv;
    csv.precision(17);
    csv << run.csv_preamble() << "sample,seed,payload,spearman,lite_recall,training_free_recall\n";
    double rho_sum = 0.0;
    double lite_sum = 0.0;
    double free_sum = 0.0;
    for (size_t i = 0; i < c.eval.count; ++i) {
        const HaystackSpec spec = dataset_item_spec(c.haystack, derive_seed(c.seed, 3), i);
        const Haystack h = build_haystack(spec);
        const TrainingSample sample = make_training_sample(h, c.teacher);
        const double rho = spearman(sample.teacher, selector.scores(h.sequence));
        const double lite = needle_recall(run_lite(h.sequence, partition, c.selection, selector), h.relevant);
        const PlantedScorer planted(c.teacher.planted_for(h), c.teacher.peak_layer);
        const double free =
            needle_recall(run_training_free(h.sequence, partition, c.selection, planted), h.relevant);
        csv << i << ',' << spec.seed << ',' << h.payload << ',' << rho << ',' << lite << ',' << free << '\n';
        rho_sum += rho;
        lite_sum += lite;
        free_sum += free;
    }
    write_file(run.out_dir / "eval.csv", csv.str());
    const double n = c.eval.count ? static_cast<double>(c.eval.count) : 1.0;
    json summary = run.stamp();
    summary["count"] = c.eval.count;
    summary["mean_spearman"] = rho_sum / n;
    summary["mean_lite_recall"] = lite_sum / n;
    summary["mean_training_free_recall"] = free_sum / n;
    write_json(run.out_dir / "eval_summary.json", summary);
    *run.out << summary.dump() << "\n";
}

void cmd_flops(const Run& run) {
    const FlopsQuery& q = run.config.flops;
    json result = flops_json(q, flops_report(q));
    result.update(run.stamp());
    write_json(run.out_dir / "flops.json", result);
    *run.out << result.dump(2) << "\n";
}

const std::map<std::string, std::function<void(const Run&)>>& commands() {
    static const std::map<std::string, std::function<void(const Run&)>> table = {
        {"gen", cmd_gen},     {"profile", cmd_profile}, {"select", cmd_select},
        {"train", cmd_train}, {"eval", cmd_eval},       {"flops", cmd_flops},
    };
    return table;
}

void configure_threads() {
    if (const char* env = std::getenv("FLEXSEL_THREADS")) {
        char* end = nullptr;
        const long threads = std::strtol(env, &end, 10);
        if (end == env || *end != '\0' || threads < 1) {
            throw UsageError(std::string("FLEXSEL_THREADS must be a positive integer, got '") + env + "'");
        }
        omp_set_num_threads(static_cast<int>(threads));
    }
}

void report_error(std::ostream& err, bool as_json, const std::string& code, const std::string& message) {
    if (as_json) {
        err << json{{"error", code}, {"message", message}}.dump() << "\n";
    } else {
        err << "flexsel: " << code << ": " << message << "\n";
    }
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    CLI::App app{"Visual token selection experiments", "flexsel"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    std::string config_path;
    std::optional<uint64_t> seed;
    std::string out_dir = "flexsel_out";
    bool json_errors = false;
    bool timing = false;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON run configuration");
    app.add_option("--seed", seed, "global seed, overriding the configuration");
    app.add_option("--out", out_dir, "output directory");
    app.add_option("--set", overrides, "override a configuration key, key.path=value");
    app.add_flag("--json-errors", json_errors, "report errors as JSON on standard error");
    app.add_flag("--timing", timing, "also write timing.json (select)");
    for (const auto& [name, fn] : commands()) {
        app.add_subcommand(name, "run the " + name + " experiment");
    }

    json_errors = std::any_of(argv + 1, argv + argc, [](const char* a) { return std::string(a) == "--json-errors"; });
    try {
        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp&) {
            out << app.help();
            return 0;
        } catch (const CLI::ParseError& e) {
            throw UsageError(e.what());
        }
        configure_threads();

        json document = json(RunConfig{});
        if (!config_path.empty()) {
            std::ifstream file(config_path);
            if (!file) {
                throw IoError("cannot open configuration " + config_path);
            }
            json given = json::parse(file, nullptr, false);
            if (given.is_discarded()) {
                throw ConfigError("configuration " + config_path + " is not valid JSON");
            }
            document = json(given.get<RunConfig>());
        }
        for (const std::string& assignment : overrides) {
            apply_override(document, assignment);
        }
        if (seed) {
            document["seed"] = *seed;
        }
        Run run;
        try {
            run.config = document.get<RunConfig>();
        } catch (const json::exception& e) {
            throw ConfigError(std::string("invalid configuration: ") + e.what());
        }
        run.document = json(run.config);
        run.hash = hex64(config_hash(run.document));
        run.out_dir = out_dir;
        run.timing = timing;
        run.out = &out;
        fs::create_directories(run.out_dir);
        const std::string command = app.get_subcommands().front()->get_name();
        json echo = run.document;
        write_json(run.out_dir / "config.json", echo);
        commands().at(command)(run);
        return 0;
    } catch (const UsageError& e) {
        report_error(err, json_errors, error_code_name(e.code()), e.what());
        err << (json_errors ? "" : app.help());
        return 2;
    } catch (const ConfigError& e) {
        report_error(err, json_errors, error_code_name(e.code()), e.what());
        return 2;
    } catch (const Error& e) {
        report_error(err, json_errors, error_code_name(e.code()), e.what());
        return 1;
    } catch (const json::exception& e) {
        report_error(err, json_errors, "configuration_error", e.what());
        return 2;
    } catch (const std::exception& e) {
        report_error(err, json_errors, "internal_error", e.what());
        return 1;
    }
}

}  // namespace flexsel::cli
