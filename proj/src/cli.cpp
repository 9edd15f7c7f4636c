#include "muff/cli.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <list>
#include <map>
#include <ostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"

#include "muff/checkpoint.hpp"
#include "muff/dataset.hpp"
#include "muff/error.hpp"
#include "muff/flow_jsonl.hpp"
#include "muff/pcap.hpp"
#include "muff/views.hpp"

namespace muff {

namespace fs = std::filesystem;

namespace {

constexpr const char* kRunManifestFormat = "muffrun/1";

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

// Pulls typed values out of Settings, recording a problem per bad field.
class Reader {
public:
    Reader(const Settings& s, std::vector<std::string>& problems) : s_(s), problems_(problems) {}

    bool has(const std::string& key) const { return s_.count(key) != 0; }

    template <typename T>
    void number(const std::string& key, T& target) {
        auto it = s_.find(key);
        if (it == s_.end()) {
            return;
        }
        if (auto v = parse_number<T>(it->second)) {
            target = *v;
        } else {
            problems_.push_back(key + ": '" + it->second + "' is not a valid " + type_name<T>());
        }
    }

    template <typename T>
    void list(const std::string& key, std::vector<T>& target) {
        auto it = s_.find(key);
        if (it == s_.end()) {
            return;
        }
        std::vector<T> values;
        for (const auto& item : split_list(it->second)) {
            if (auto v = parse_number<T>(item)) {
                values.push_back(*v);
            } else {
                problems_.push_back(key + ": '" + item + "' is not a valid " + type_name<T>());
                return;
            }
        }
        if (values.empty()) {
            problems_.push_back(key + ": empty list");
            return;
        }
        target = std::move(values);
    }

    void flag(const std::string& key, bool& target) {
        auto it = s_.find(key);
        if (it == s_.end()) {
            return;
        }
        const std::string& v = it->second;
        if (v == "true" || v == "1" || v == "yes" || v == "on") {
            target = true;
        } else if (v == "false" || v == "0" || v == "no" || v == "off") {
            target = false;
        } else {
            problems_.push_back(key + ": '" + v + "' is not a boolean");
        }
    }

    void text(const std::string& key, std::string& target) {
        if (auto it = s_.find(key); it != s_.end()) {
            target = it->second;
        }
    }

    void path(const std::string& key, fs::path& target) {
        if (auto it = s_.find(key); it != s_.end()) {
            target = it->second;
        }
    }

    template <typename T>
    static std::optional<T> parse_number(const std::string& raw) {
        const std::string s = trim(raw);
        T value{};
        const char* first = s.data();
        const char* last = s.data() + s.size();
        if constexpr (std::is_floating_point_v<T>) {
            // from_chars for double is fine on libstdc++ 11
            auto [p, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || p != last || s.empty()) return std::nullopt;
        } else {
            if (!s.empty() && s[0] == '-') return std::nullopt;
            auto [p, ec] = std::from_chars(first, last, value);
            if (ec != std::errc() || p != last || s.empty()) return std::nullopt;
        }
        return value;
    }

private:
    template <typename T>
    static const char* type_name() {
        return std::is_floating_point_v<T> ? "number" : "non-negative integer";
    }

    const Settings& s_;
    std::vector<std::string>& problems_;
};

std::string now_utc() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

void write_json(const nlohmann::json& j, const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    out << j.dump(2) << '\n';
}

void require_file(std::vector<std::string>& problems, const std::string& what, const fs::path& p) {
    if (p.empty()) {
        problems.push_back(what + " is required");
    } else if (!fs::is_regular_file(p)) {
        problems.push_back(what + " '" + p.string() + "' does not exist");
    }
}

void require_out(std::vector<std::string>& problems, const fs::path& p) {
    if (p.empty()) {
        problems.push_back("io.out (--out) is required");
    }
}

void throw_if(std::vector<std::string> problems) {
    if (!problems.empty()) {
        throw ConfigError(std::move(problems));
    }
}

std::string fmt_metric(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4f", v);
    return buf;
}

// Dataset, split and the artifact-choice notes shared by train and eval.
struct Prepared {
    Dataset data;
    SplitResult parts;
    std::string flows_digest;
};

Prepared prepare(const RunConfig& cfg, std::vector<std::string> classes) {
    Prepared p;
    p.flows_digest = sha256_file(cfg.flows);
    p.data = build_dataset(read_flows_jsonl(cfg.flows), cfg.model.n, cfg.model.m, std::move(classes));
    p.parts = split(p.data.labels(), cfg.split);
    return p;
}

nlohmann::json split_json(const Prepared& p, const SplitSpec& spec) {
    return {{"spec", to_json(spec)},
            {"sizes", {{"train", p.parts.train.size()}, {"val", p.parts.val.size()}, {"test", p.parts.test.size()}}},
            {"hashes",
             {{"train", membership_hash(p.data.flow_ids, p.parts.train)},
              {"val", membership_hash(p.data.flow_ids, p.parts.val)},
              {"test", membership_hash(p.data.flow_ids, p.parts.test)}}},
            {"warnings", p.parts.warnings}};
}

nlohmann::json artifact_choices() {
    TrainOptions t;
    SplitSpec s;
    return {{"note", "training schedule and split protocol are defaults of this implementation"},
            {"optimizer", "adam"},
            {"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"split", to_json(s)},
            {"model_selection", "best validation accuracy, earliest epoch on ties"}};
}

void print_metrics(std::ostream& out, const std::string& scope, const MetricsReport& m) {
    out << scope << ": n=" << m.total << " acc=" << fmt_metric(m.accuracy)
        << " macro_p=" << fmt_metric(m.macro_precision) << " macro_r=" << fmt_metric(m.macro_recall)
        << " macro_f1=" << fmt_metric(m.macro_f1) << '\n';
}

void write_metrics_csv(const MetricsReport& m, const std::vector<std::string>& classes,
                       const fs::path& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open for writing: " + path.string());
    }
    char buf[160];
    out << "class,precision,recall,f1,support\n";
    for (std::size_t c = 0; c < m.per_class.size(); ++c) {
        const auto& pc = m.per_class[c];
        std::snprintf(buf, sizeof buf, ",%.6f,%.6f,%.6f,%zu\n", pc.precision, pc.recall, pc.f1, pc.support);
        out << classes[c] << buf;
    }
    std::snprintf(buf, sizeof buf, "macro,%.6f,%.6f,%.6f,%zu\n", m.macro_precision, m.macro_recall,
                  m.macro_f1, m.total);
    out << buf;
    std::snprintf(buf, sizeof buf, "accuracy,%.6f,,,%zu\n", m.accuracy, m.total);
    out << buf;
}

// ---- commands ----

int cmd_extract(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> problems;
    if (cfg.inputs.empty()) {
        problems.push_back("at least one --input pcap is required");
    }
    for (const auto& in : cfg.inputs) {
        require_file(problems, "input", in);
    }
    if (!cfg.manifest.empty()) {
        require_file(problems, "label manifest", cfg.manifest);
    }
    require_out(problems, cfg.out);
    if (cfg.views) {
        for (auto& p : cfg.model.problems()) {
            if (p.rfind("model.n", 0) == 0 || p.rfind("model.m", 0) == 0) problems.push_back(p);
        }
    }
    throw_if(std::move(problems));

    LabelManifest manifest = cfg.manifest.empty() ? LabelManifest{} : LabelManifest::load(cfg.manifest);
    std::vector<Flow> flows;
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    for (const auto& in : cfg.inputs) {
        PcapParseResult r = parse_pcap(in);
        parsed += r.records.size();
        skipped += r.skipped;
        auto file_flows = assemble_flows(r.records, manifest, in.filename().string());
        flows.insert(flows.end(), std::make_move_iterator(file_flows.begin()),
                     std::make_move_iterator(file_flows.end()));
    }
    if (cfg.out.has_parent_path()) {
        fs::create_directories(cfg.out.parent_path());
    }
    if (cfg.views) {
        write_flows_jsonl(flows, cfg.out, [&](const Flow& f, nlohmann::json& j) {
            if (!f.packets.empty()) {
                append_views_json(build_views(f, cfg.model.n, cfg.model.m), j);
            }
        });
    } else {
        write_flows_jsonl(flows, cfg.out);
    }
    std::map<std::string, std::size_t> histogram;
    for (const auto& f : flows) {
        ++histogram[f.label];
    }
    out << "packets=" << parsed << " skipped=" << skipped << " flows=" << flows.size() << " labels:";
    for (const auto& [label, count] : histogram) {
        out << ' ' << label << '=' << count;
    }
    out << '\n';
    return kExitOk;
}

int cmd_train(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> problems = cfg.model.problems();
    require_file(problems, "flows file (--flows)", cfg.flows);
    require_out(problems, cfg.out);
    throw_if(std::move(problems));

    Prepared p = prepare(cfg, {});
    for (const auto& w : p.parts.warnings) {
        out << "warning: " << w << '\n';
    }
    ModelConfig model = cfg.model;
    model.num_classes = p.data.classes.size();
    model.validate();
    std::vector<Sample> train_set = select(p.data.samples, p.parts.train);
    std::vector<Sample> val_set = select(p.data.samples, p.parts.val);
    std::vector<Sample> test_set = select(p.data.samples, p.parts.test);

    Rng init_rng(cfg.seed);
    ModelParams params = init_params(model, init_rng);
    TrainOptions topt = cfg.train;
    topt.seed = cfg.seed;
    TrainResult tr = train(model, params, train_set, val_set, topt, [&](const EpochStats& s) {
        out << "epoch " << s.epoch << " loss=" << fmt_metric(s.train_loss)
            << " val_acc=" << fmt_metric(s.val_accuracy) << '\n';
    });

    nlohmann::json metrics = nlohmann::json::object();
    if (!test_set.empty()) {
        MetricsReport report = evaluate(model, tr.params, test_set, topt.batch_size);
        print_metrics(out, "test", report);
        metrics["test"] = to_json(report);
    }

    fs::create_directories(cfg.out);
    Checkpoint ckpt = params_to_checkpoint(tr.params);
    ckpt.meta = {{"model", to_json(model)},
                 {"classes", p.data.classes},
                 {"split", to_json(cfg.split)},
                 {"batch_size", topt.batch_size},
                 {"seed", cfg.seed},
                 {"best_epoch", tr.best_epoch},
                 {"flows_sha256", p.flows_digest}};
    write_checkpoint(ckpt, cfg.out / "model.ckpt");

    nlohmann::json history = nlohmann::json::array();
    for (const auto& s : tr.history) {
        history.push_back({{"epoch", s.epoch}, {"train_loss", s.train_loss}, {"val_accuracy", s.val_accuracy}});
    }
    nlohmann::json manifest = {{"format", kRunManifestFormat},
                               {"command", "train"},
                               {"created_at", now_utc()},
                               {"config", to_json(cfg)},
                               {"model", to_json(model)},
                               {"classes", p.data.classes},
                               {"seeds", {{"run", cfg.seed}, {"split", cfg.split.seed}}},
                               {"split", split_json(p, cfg.split)},
                               {"datasets", {{{"path", cfg.flows.string()}, {"sha256", p.flows_digest}}}},
                               {"dropped_empty_flows", p.data.dropped_empty},
                               {"history", std::move(history)},
                               {"best_epoch", tr.best_epoch},
                               {"checkpoint_sha256", sha256_file(cfg.out / "model.ckpt")},
                               {"metrics", std::move(metrics)},
                               {"artifact_choices", artifact_choices()}};
    write_json(manifest, cfg.out / "manifest.json");
    out << "wrote " << (cfg.out / "model.ckpt").string() << '\n';
    return kExitOk;
}

int cmd_eval(RunConfig cfg, std::ostream& out) {
    std::vector<std::string> problems;
    require_file(problems, "checkpoint (--checkpoint)", cfg.checkpoint);
    require_file(problems, "flows file (--flows)", cfg.flows);
    if (cfg.part != "train" && cfg.part != "val" && cfg.part != "test" && cfg.part != "all") {
        problems.push_back("eval.part must be one of train, val, test, all");
    }
    throw_if(std::move(problems));

    Checkpoint ckpt = read_checkpoint(cfg.checkpoint);
    ModelConfig model;
    std::vector<std::string> classes;
    std::size_t batch_size = cfg.train.batch_size;
    try {
        model = model_config_from_json(ckpt.meta.at("model"));
        classes = ckpt.meta.at("classes").get<std::vector<std::string>>();
        cfg.split = split_spec_from_json(ckpt.meta.at("split"));
        batch_size = ckpt.meta.at("batch_size").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint metadata incomplete: ") + e.what());
    }
    cfg.model = model;
    ModelParams params = params_from_checkpoint(ckpt, model);
    Prepared p = prepare(cfg, classes);

    std::vector<std::size_t> indices;
    if (cfg.part == "all") {
        indices.resize(p.data.samples.size());
        for (std::size_t i = 0; i < indices.size(); ++i) indices[i] = i;
    } else {
        indices = cfg.part == "train" ? p.parts.train : cfg.part == "val" ? p.parts.val : p.parts.test;
    }
    std::vector<Sample> samples = select(p.data.samples, indices);
    MetricsReport report = evaluate(model, params, samples, batch_size);
    print_metrics(out, cfg.part, report);
    if (!cfg.out.empty()) {
        fs::create_directories(cfg.out);
        write_metrics_csv(report, classes, cfg.out / "metrics.csv");
        write_json({{"format", kRunManifestFormat},
                    {"command", "eval"},
                    {"created_at", now_utc()},
                    {"checkpoint_sha256", sha256_file(cfg.checkpoint)},
                    {"datasets", {{{"path", cfg.flows.string()}, {"sha256", p.flows_digest}}}},
                    {"part", cfg.part},
                    {"split", split_json(p, cfg.split)},
                    {"metrics", to_json(report)}},
                   cfg.out / "metrics.json");
    }
    return kExitOk;
}

ExperimentOptions experiment_options(const RunConfig& cfg) {
    ExperimentOptions opt;
    opt.model = cfg.model;
    opt.split = cfg.split;
    opt.train = cfg.train;
    opt.seeds = cfg.seeds;
    opt.jobs = cfg.jobs;
    return opt;
}

int write_experiment(const RunConfig& cfg, const std::string& command, const ExperimentTable& table,
                     const std::string& key, std::ostream& out) {
    fs::create_directories(cfg.out);
    const fs::path csv = cfg.out / (command == "ablate" ? "ablation.csv" : "sweep.csv");
    write_table_csv(table, key, csv);
    write_json({{"format", kRunManifestFormat},
                {"command", command},
                {"created_at", now_utc()},
                {"config", to_json(cfg)},
                {"seeds", {{"runs", cfg.seeds}, {"split", cfg.split.seed}}},
                {"datasets", {{{"path", cfg.flows.string()}, {"sha256", sha256_file(cfg.flows)}}}},
                {"results", to_json(table)},
                {"artifact_choices", artifact_choices()}},
               cfg.out / "manifest.json");
    for (const auto& row : table.rows) {
        out << row.name << ": acc=" << fmt_metric(row.accuracy.mean) << "+-"
            << fmt_metric(row.accuracy.stddev) << " macro_f1=" << fmt_metric(row.macro_f1.mean) << "+-"
            << fmt_metric(row.macro_f1.stddev);
        if (!row.errors.empty()) {
            out << " (" << row.errors.size() << " failed)";
        }
        out << '\n';
    }
    out << "wrote " << csv.string() << '\n';
    return kExitOk;
}

int cmd_ablate(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> problems = cfg.model.problems();
    require_file(problems, "flows file (--flows)", cfg.flows);
    require_out(problems, cfg.out);
    throw_if(std::move(problems));
    auto flows = read_flows_jsonl(cfg.flows);
    return write_experiment(cfg, "ablate", run_ablations(experiment_options(cfg), flows, cfg.variants),
                            "variant", out);
}

int cmd_sweep(const RunConfig& cfg, std::ostream& out) {
    std::vector<std::string> problems;
    require_file(problems, "flows file (--flows)", cfg.flows);
    require_out(problems, cfg.out);
    for (const auto& pt : sweep_grid(cfg)) {
        ModelConfig m = cfg.model;
        m.n = pt.n;
        m.m = pt.m;
        m.alpha = pt.alpha;
        for (auto& p : m.problems()) {
            char buf[64];
            std::snprintf(buf, sizeof buf, "grid point n=%zu m=%zu alpha=%g: ", pt.n, pt.m, pt.alpha);
            problems.push_back(buf + p);
        }
    }
    throw_if(std::move(problems));
    auto flows = read_flows_jsonl(cfg.flows);
    return write_experiment(cfg, "sweep", run_sweep(experiment_options(cfg), flows, sweep_grid(cfg)),
                            "point", out);
}

// ---- argument plumbing ----

// A string flag that, when given, sets one settings key.
struct Binding {
    CLI::Option* option;
    std::string key;
    std::string value;
};

class FlagBinder {
public:
    void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto& b = bindings_.emplace_back();
        b.key = key;
        b.option = app->add_option(flag, b.value, help + " [" + key + "]");
    }

    void switch_(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
        auto& b = bindings_.emplace_back();
        b.key = key;
        b.value = "true";
        b.option = app->add_flag(flag)->description(help + " [" + key + "]");
    }

    void apply(Settings& s) const {
        for (const auto& b : bindings_) {
            if (b.option->count() > 0) {
                s[b.key] = b.value;
            }
        }
    }

private:
    std::list<Binding> bindings_;
};

void add_model_flags(FlagBinder& fb, CLI::App* app, bool sweep) {
    if (sweep) {
        fb.bind(app, "--n", "sweep.n", "packets per flow, comma-separated grid");
        fb.bind(app, "--m", "sweep.m", "payload bytes per packet, comma-separated grid");
        fb.bind(app, "--alpha", "sweep.alpha", "fusion weight of the graph view, comma-separated grid");
    } else {
        fb.bind(app, "--n", "model.n", "packets per flow");
        fb.bind(app, "--m", "model.m", "payload bytes per packet");
        fb.bind(app, "--alpha", "model.alpha", "fusion weight of the graph view in [0, 1]");
    }
    fb.bind(app, "--hidden", "model.hidden", "width of every branch output");
    fb.bind(app, "--gcn-layers", "model.gcn_layers", "number of graph convolution layers");
    fb.bind(app, "--dropout", "model.dropout", "dropout probability in [0, 1)");
    fb.bind(app, "--cnn-channels", "model.cnn_channels", "two conv widths, e.g. 32,64");
    fb.bind(app, "--attn-hidden", "model.attn_hidden", "attention scorer width");
    fb.bind(app, "--variant", "model.variant", "MuFF, CNN, LSTM, GCN, CNN+GCN, LSTM+GCN or CNN+LSTM");
}

void add_training_flags(FlagBinder& fb, CLI::App* app) {
    fb.bind(app, "--flows", "io.flows", "flows JSONL written by extract");
    fb.bind(app, "--out", "io.out", "output directory");
    fb.bind(app, "--seed", "run.seed", "seed for init, shuffling and dropout (default: $MUFF_SEED or 0)");
    fb.bind(app, "--epochs", "train.epochs", "training epochs");
    fb.bind(app, "--batch-size", "train.batch_size", "mini-batch size");
    fb.bind(app, "--lr", "train.lr", "Adam learning rate");
    fb.bind(app, "--split", "split.fractions", "train,val,test fractions, e.g. 0.8,0.1,0.1");
    fb.bind(app, "--split-seed", "split.seed", "seed of the train/val/test split");
    fb.bind(app, "--stratify", "split.stratify", "stratify the split by label (true/false)");
}

}  // namespace

const std::vector<std::string>& known_config_keys() {
    static const std::vector<std::string> keys{
        "model.n",          "model.m",           "model.alpha",      "model.hidden",
        "model.gcn_layers", "model.dropout",     "model.cnn_channels", "model.attn_hidden",
        "model.variant",    "train.epochs",      "train.batch_size", "train.lr",
        "split.fractions",  "split.train",       "split.val",        "split.test",
        "split.seed",       "split.stratify",    "run.seed",         "run.seeds",
        "run.variants",     "run.jobs",          "sweep.n",          "sweep.m",
        "sweep.alpha",      "io.inputs",         "io.flows",         "io.manifest",
        "io.out",           "io.checkpoint",     "io.views",         "eval.part"};
    return keys;
}

Settings parse_config_text(std::string_view text) {
    Settings s;
    std::vector<std::string> problems;
    const auto& keys = known_config_keys();
    std::size_t line_no = 0;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        ++line_no;
        if (auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        const std::string t = trim(line);
        if (t.empty()) {
            continue;
        }
        const auto eq = t.find('=');
        if (eq == std::string::npos) {
            problems.push_back("line " + std::to_string(line_no) + ": expected key=value");
            continue;
        }
        const std::string key = trim(t.substr(0, eq));
        if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
            problems.push_back("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
            continue;
        }
        s[key] = trim(t.substr(eq + 1));
    }
    throw_if(std::move(problems));
    return s;
}

Settings load_config_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError({"cannot read config file '" + path.string() + "'"});
    }
    std::stringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_text(ss.str());
    } catch (const ConfigError& e) {
        std::vector<std::string> problems;
        for (const auto& p : e.problems()) {
            problems.push_back(path.string() + ": " + p);
        }
        throw ConfigError(std::move(problems));
    }
}

RunConfig resolve_config(const Settings& settings, const char* env_seed) {
    RunConfig cfg;
    std::vector<std::string> problems;
    Reader r(settings, problems);

    r.number("model.n", cfg.model.n);
    r.number("model.m", cfg.model.m);
    r.number("model.alpha", cfg.model.alpha);
    r.number("model.hidden", cfg.model.hidden);
    r.number("model.gcn_layers", cfg.model.gcn_layers);
    r.number("model.dropout", cfg.model.dropout);
    r.number("model.attn_hidden", cfg.model.attn_hidden);
    if (r.has("model.cnn_channels")) {
        std::vector<std::size_t> ch;
        r.list("model.cnn_channels", ch);
        if (ch.size() == 2) {
            cfg.model.cnn_channels = {ch[0], ch[1]};
        } else if (!ch.empty()) {
            problems.push_back("model.cnn_channels: expected exactly two widths");
        }
    }
    if (r.has("model.variant")) {
        std::string name;
        r.text("model.variant", name);
        if (auto v = parse_variant(name)) {
            cfg.model.variant = *v;
        } else {
            problems.push_back("model.variant: unknown variant '" + name + "'");
        }
    }

    for (auto& p : cfg.model.problems()) problems.push_back(p);

    r.number("train.epochs", cfg.train.epochs);
    r.number("train.batch_size", cfg.train.batch_size);
    r.number("train.lr", cfg.train.adam.lr);
    if (cfg.train.batch_size == 0) problems.push_back("train.batch_size must be >= 1");
    if (!(cfg.train.adam.lr > 0.0)) problems.push_back("train.lr must be positive");

    if (r.has("split.fractions")) {
        std::vector<double> f;
        r.list("split.fractions", f);
        if (f.size() == 3) {
            cfg.split.train = f[0];
            cfg.split.val = f[1];
            cfg.split.test = f[2];
        } else if (!f.empty()) {
            problems.push_back("split.fractions: expected three values train,val,test");
        }
    }
    r.number("split.train", cfg.split.train);
    r.number("split.val", cfg.split.val);
    r.number("split.test", cfg.split.test);
    r.number("split.seed", cfg.split.seed);
    r.flag("split.stratify", cfg.split.stratify);
    for (auto& p : cfg.split.problems()) problems.push_back(p);

    if (r.has("run.seed")) {
        r.number("run.seed", cfg.seed);
    } else if (env_seed != nullptr && *env_seed != '\0') {
        if (auto v = Reader::parse_number<std::uint64_t>(env_seed)) {
            cfg.seed = *v;
        } else {
            problems.push_back(std::string("MUFF_SEED: '") + env_seed + "' is not a valid seed");
        }
    }
    cfg.seeds = {cfg.seed};
    r.list("run.seeds", cfg.seeds);
    cfg.variants.assign(all_variants().begin(), all_variants().end());
    if (r.has("run.variants")) {
        std::string raw;
        r.text("run.variants", raw);
        std::vector<Variant> vs;
        for (const auto& name : split_list(raw)) {
            if (auto v = parse_variant(name)) {
                vs.push_back(*v);
            } else {
                problems.push_back("run.variants: unknown variant '" + name + "'");
            }
        }
        if (vs.empty()) problems.push_back("run.variants: empty list");
        cfg.variants = std::move(vs);
    }
    r.number("run.jobs", cfg.jobs);
    if (cfg.jobs == 0) problems.push_back("run.jobs must be >= 1");

    cfg.sweep_n = {cfg.model.n};
    cfg.sweep_m = {cfg.model.m};
    cfg.sweep_alpha = {cfg.model.alpha};
    r.list("sweep.n", cfg.sweep_n);
    r.list("sweep.m", cfg.sweep_m);
    r.list("sweep.alpha", cfg.sweep_alpha);

    if (auto it = settings.find("io.inputs"); it != settings.end()) {
        for (const auto& p : split_list(it->second)) cfg.inputs.emplace_back(p);
    }
    r.path("io.flows", cfg.flows);
    r.path("io.manifest", cfg.manifest);
    r.path("io.out", cfg.out);
    r.path("io.checkpoint", cfg.checkpoint);
    r.flag("io.views", cfg.views);
    r.text("eval.part", cfg.part);

    throw_if(std::move(problems));
    return cfg;
}

nlohmann::json to_json(const RunConfig& cfg) {
    std::vector<std::string> variants;
    for (Variant v : cfg.variants) variants.emplace_back(variant_name(v));
    std::vector<std::string> inputs;
    for (const auto& p : cfg.inputs) inputs.push_back(p.string());
    return {{"model", to_json(cfg.model)},
            {"split", to_json(cfg.split)},
            {"train", {{"epochs", cfg.train.epochs}, {"batch_size", cfg.train.batch_size},
                       {"lr", cfg.train.adam.lr}, {"beta1", cfg.train.adam.beta1},
                       {"beta2", cfg.train.adam.beta2}, {"eps", cfg.train.adam.eps}}},
            {"seed", cfg.seed},
            {"seeds", cfg.seeds},
            {"variants", variants},
            {"jobs", cfg.jobs},
            {"sweep", {{"n", cfg.sweep_n}, {"m", cfg.sweep_m}, {"alpha", cfg.sweep_alpha}}},
            {"io", {{"inputs", inputs}, {"flows", cfg.flows.string()}, {"manifest", cfg.manifest.string()},
                    {"out", cfg.out.string()}, {"checkpoint", cfg.checkpoint.string()}, {"views", cfg.views}}}};
}

std::vector<SweepPoint> sweep_grid(const RunConfig& cfg) {
    std::vector<SweepPoint> grid;
    for (std::size_t n : cfg.sweep_n) {
        for (std::size_t m : cfg.sweep_m) {
            for (double a : cfg.sweep_alpha) {
                grid.push_back({n, m, a});
            }
        }
    }
    return grid;
}

std::string sha256_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot read " + path.string());
    }
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
    char buf[1 << 16];
    while (in.read(buf, sizeof buf) || in.gcount() > 0) {
        EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
    }
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_DigestFinal_ex(ctx, md, &len);
    EVP_MD_CTX_free(ctx);
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += kHex[md[i] >> 4];
        out += kHex[md[i] & 15];
    }
    return out;
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"MuFF multi-view traffic classifier", "muff"};
    app.require_subcommand(1);
    app.set_help_all_flag("--help-all", "help for every subcommand");
    FlagBinder fb;
    std::string config_path;
    std::vector<std::string> inputs;

    auto* extract = app.add_subcommand("extract", "parse pcaps into labelled flows (JSONL)");
    extract->add_option("--input", inputs, "classic pcap file; repeat for several")->required();
    fb.bind(extract, "--manifest", "io.manifest", "label manifest (pattern = label per line)");
    fb.bind(extract, "--out", "io.out", "flows JSONL to write");
    fb.switch_(extract, "--views", "io.views", "also write length/payload/graph views");
    fb.bind(extract, "--n", "model.n", "packets per flow for --views");
    fb.bind(extract, "--m", "model.m", "payload bytes per packet for --views");

    auto* train_cmd = app.add_subcommand("train", "train one model and evaluate it on the test split");
    add_training_flags(fb, train_cmd);
    add_model_flags(fb, train_cmd, false);

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a split of a flows file");
    fb.bind(eval, "--checkpoint", "io.checkpoint", "model.ckpt written by train");
    fb.bind(eval, "--flows", "io.flows", "flows JSONL");
    fb.bind(eval, "--part", "eval.part", "train, val, test or all (default test)");
    fb.bind(eval, "--out", "io.out", "directory for metrics.csv and metrics.json");

    auto* ablate = app.add_subcommand("ablate", "train every selected variant on a shared split");
    add_training_flags(fb, ablate);
    add_model_flags(fb, ablate, false);
    fb.bind(ablate, "--variants", "run.variants", "comma-separated variants (default all seven)");
    fb.bind(ablate, "--seeds", "run.seeds", "comma-separated seeds (default --seed)");
    fb.bind(ablate, "--jobs", "run.jobs", "cells trained concurrently");

    auto* sweep = app.add_subcommand("sweep", "train over an n x m x alpha grid");
    add_training_flags(fb, sweep);
    add_model_flags(fb, sweep, true);
    fb.bind(sweep, "--seeds", "run.seeds", "comma-separated seeds (default --seed)");
    fb.bind(sweep, "--jobs", "run.jobs", "grid points trained concurrently");

    for (auto* sub : {train_cmd, eval, ablate, sweep}) {
        sub->add_option("--config", config_path, "key=value config file; flags override it");
    }

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err) == 0 ? kExitOk : kExitConfig;
    }

    try {
        Settings settings = config_path.empty() ? Settings{} : load_config_file(config_path);
        fb.apply(settings);
        RunConfig cfg = resolve_config(settings, std::getenv("MUFF_SEED"));
        if (!inputs.empty()) {
            cfg.inputs.assign(inputs.begin(), inputs.end());
        }
        if (extract->parsed()) return cmd_extract(cfg, out);
        if (train_cmd->parsed()) return cmd_train(cfg, out);
        if (eval->parsed()) return cmd_eval(cfg, out);
        if (ablate->parsed()) return cmd_ablate(cfg, out);
        return cmd_sweep(cfg, out);
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return kExitConfig;
    } catch (const NumericalError& e) {
        err << "numerical failure: " << e.what() << '\n';
        return kExitNumerical;
    } catch (const FormatError& e) {
        err << "input error: " << e.what() << '\n';
        return kExitFormat;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
}

}  // namespace muff
