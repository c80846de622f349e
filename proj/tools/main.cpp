#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "run_config.hpp"
#include "siamcheck/error.hpp"
#include "siamcheck/voting.hpp"
#include "siamcheck/weights.hpp"

using namespace siamcheck;
using namespace siamcheck::cli;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kShardIndex = "index.json";
constexpr const char* kShardIndexKind = "siamcheck-shards";

struct Flags {
    std::string config, variant, pairs, split, weights, out, data, reference, panel, image;
    std::uint64_t seed = 0;
    std::size_t epochs = 0, batch_size = 0, k = 0, resolution = 0, count = 0;
    float lr = 0.0f;
    double threshold = 0.0;
    std::map<std::string, std::vector<CLI::Option*>> given;

    bool has(const std::string& name) const {
        auto it = given.find(name);
        if (it == given.end()) return false;
        for (const auto* o : it->second)
            if (o->count() > 0) return true;
        return false;
    }
};

void add_common(CLI::App* cmd, Flags& f) {
    f.given["config"].push_back(cmd->add_option("--config", f.config, "JSON run configuration"));
    f.given["seed"].push_back(cmd->add_option("--seed", f.seed, "global seed"));
    f.given["variant"].push_back(cmd->add_option("--variant", f.variant, "cnn-scratch|snn-scratch|cnn-transfer|snn-transfer|snn-voting"));
    f.given["pairs"].push_back(cmd->add_option("--pairs", f.pairs, "pair regime")->check(CLI::IsMember({"random", "reference-anchored"})));
    f.given["epochs"].push_back(cmd->add_option("--epochs", f.epochs, "training epochs"));
    f.given["batch-size"].push_back(cmd->add_option("--batch-size", f.batch_size, "mini-batch size"));
    f.given["lr"].push_back(cmd->add_option("--lr", f.lr, "Adam learning rate"));
    f.given["threshold"].push_back(cmd->add_option("--threshold", f.threshold, "decision threshold"));
    f.given["k"].push_back(cmd->add_option("--k", f.k, "reference panel size"));
    f.given["split"].push_back(cmd->add_option("--split", f.split, "evaluation split"));
    f.given["resolution"].push_back(cmd->add_option("--resolution", f.resolution, "input edge length (64, 128 or 256)"));
    f.given["weights"].push_back(cmd->add_option("--weights", f.weights, "weight file"));
    f.given["out"].push_back(cmd->add_option("--out", f.out, "output path"));
    f.given["data"].push_back(cmd->add_option("--data", f.data, "dataset root or ingested shard directory"));
}

RunConfig resolve(const Flags& f) {
    RunConfig c = f.has("config") ? RunConfig::from_file(f.config) : RunConfig{};
    if (c.dataset_root.empty())
        if (const char* env = std::getenv("SIAMCHECK_DATA")) c.dataset_root = env;
    if (f.has("data")) c.dataset_root = f.data;
    if (f.has("seed")) c.train.seed = f.seed;
    if (f.has("variant")) c.variant = parse_variant(f.variant);
    if (f.has("pairs")) c.train.pair_regime = parse_pair_regime(f.pairs);
    if (f.has("epochs")) c.train.epochs = f.epochs;
    if (f.has("batch-size")) c.train.batch_size = f.batch_size;
    if (f.has("lr")) c.train.lr = f.lr;
    if (f.has("threshold")) c.train.threshold = f.threshold;
    if (f.has("k")) c.k = f.k;
    if (f.has("split")) c.split = f.split;
    if (f.has("resolution")) c.resolution = f.resolution;
    if (f.has("weights")) c.weights = f.weights;
    if (f.has("out")) c.out = f.out;
    if (f.has("reference")) c.reference = f.reference;
    if (f.has("count")) c.preview_count = f.count;
    c.validate();
    return c;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::Io, "cannot write '" + path.string() + "'");
    out << text;
    if (!out) throw Error(ErrorKind::Io, "write failed for '" + path.string() + "'");
}

json read_json(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, path.string() + ": " + e.what());
    }
}

fs::path output_dir(const RunConfig& c) {
    fs::path dir(c.out);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw Error(ErrorKind::Io, "cannot create '" + dir.string() + "': " + ec.message());
    return dir;
}

void snapshot(const RunConfig& c, const fs::path& dir) { write_text(dir / "config.json", c.to_json().dump(2) + "\n"); }

DatasetIndex open_index(const RunConfig& c) {
    if (c.dataset_root.empty()) throw Error(ErrorKind::Config, "no dataset root: pass --data or set dataset_root");
    if (c.layout == Layout::OmniglotSubset && !c.alphabets.empty())
        return build_omniglot_subset(c.dataset_root, c.alphabets, c.train.seed);
    return load_dataset_index(c.dataset_root, c.layout, c.train.seed);
}

std::vector<LabeledImage> load_images(const RunConfig& c, const std::string& split) {
    const fs::path root(c.dataset_root);
    if (!root.empty() && fs::exists(root / kShardIndex)) {
        const json index = read_json(root / kShardIndex);
        if (index.value("kind", "") != kShardIndexKind)
            throw Error(ErrorKind::Format, (root / kShardIndex).string() + " is not a shard index");
        if (index.at("resolution").get<std::size_t>() != c.resolution)
            throw Error(ErrorKind::Config, "shards were ingested at resolution " +
                                               std::to_string(index.at("resolution").get<std::size_t>()) +
                                               ", run asks for " + std::to_string(c.resolution));
        const json& splits = index.at("splits");
        if (!splits.contains(split)) throw Error(ErrorKind::Layout, "shard directory has no split '" + split + "'");
        return read_shard(root / splits.at(split).at("file").get<std::string>());
    }
    return load_split(open_index(c), split, c.resolution);
}

void print_metrics(const std::string& label, const MetricsReport& m) {
    std::printf("%s: accuracy %.4f precision %.4f recall %.4f fdr %.4f fnr %.4f (tp %llu fp %llu tn %llu fn %llu)\n",
                label.c_str(), m.accuracy, m.precision, m.recall, m.fdr, m.fnr,
                static_cast<unsigned long long>(m.counts.tp), static_cast<unsigned long long>(m.counts.fp),
                static_cast<unsigned long long>(m.counts.tn), static_cast<unsigned long long>(m.counts.fn));
}

json eval_extras(const RunConfig& c) { return {{"split", c.split}, {"threshold", c.train.threshold}}; }

const LabeledImage& find_image(const std::string& id, const std::vector<LabeledImage>& a,
                               const std::vector<LabeledImage>& b) {
    for (const auto* set : {&a, &b})
        for (const auto& img : *set)
            if (img.id == id) return img;
    throw Error(ErrorKind::Load, "no image with id '" + id + "'");
}

void check_resolution(const ModelGraph& g, const RunConfig& c) {
    const Shape want{c.resolution, c.resolution, 3};
    if (g.input_shape() != want)
        throw Error(ErrorKind::Load, "weights expect input " + shape_to_string(g.input_shape()) + ", run uses " +
                                         shape_to_string(want));
}

ModelGraph load_trained(const RunConfig& c) {
    if (c.weights.empty()) throw Error(ErrorKind::Config, "--weights is required");
    ModelGraph g = model_from_weights(fs::path(c.weights));
    check_resolution(g, c);
    return g;
}

// ---------------------------------------------------------------------------

int cmd_ingest(const RunConfig& c) {
    const DatasetIndex index = open_index(c);
    const fs::path dir = output_dir(c);
    json splits = json::object();
    for (const auto& [name, records] : index.splits) {
        const auto images = load_split(index, name, c.resolution);
        const std::string file = name + ".shard";
        write_shard(dir / file, images);
        json subclasses = json::object();
        for (const auto& [sub, n] : index.subclass_counts(name)) subclasses[sub] = n;
        const std::size_t correct = index.count(name, ImageClass::Correct);
        const std::size_t incorrect = index.count(name, ImageClass::Incorrect);
        splits[name] = {{"file", file}, {"correct", correct}, {"incorrect", incorrect}, {"subclasses", subclasses}};
        std::printf("%s: %zu images (%zu correct / %zu incorrect)\n", name.c_str(), records.size(), correct, incorrect);
    }
    json unreadable = json::array();
    for (const auto& p : index.unreadable) unreadable.push_back(fs::relative(p, index.root).generic_string());
    for (const auto& p : unreadable) std::printf("skipped unreadable file: %s\n", p.get<std::string>().c_str());
    const json manifest = {{"kind", kShardIndexKind},
                           {"layout", c.to_json().at("layout")},
                           {"resolution", c.resolution},
                           {"seed", c.train.seed},
                           {"splits", splits},
                           {"unreadable", unreadable}};
    write_text(dir / kShardIndex, manifest.dump(2) + "\n");
    return 0;
}

int cmd_train(const RunConfig& c) {
    if (is_transfer(c.variant) && c.weights.empty())
        throw Error(ErrorKind::Config, std::string(to_string(c.variant)) + " needs a pretrained weight file (--weights)");
    Dataset data{load_images(c, c.train_split), load_images(c, c.split)};
    const ModelKind kind = model_kind_of(c.variant);
    ModelGraph g = build_model(kind, {c.resolution, c.resolution, 3}, c.model_config());
    if (is_transfer(c.variant)) apply_transfer(g, load_weights(c.weights), c.freeze);

    const fs::path dir = output_dir(c);
    snapshot(c, dir);
    std::printf("training %s on %zu images, validating on %zu\n", std::string(to_string(c.variant)).c_str(),
                data.train.size(), data.validation.size());
    const TrainResult result = kind == ModelKind::Classifier ? train_classifier(g, data, c.train) : train_snn(g, data, c.train);
    for (const auto& l : result.logs)
        std::printf("epoch %zu: loss %.4f train_acc %.4f val_acc %.4f\n", l.epoch, l.train_loss, l.train_acc, l.val_acc);
    export_epoch_log(result.logs, dir / "epoch_log.csv");
    save_weights(g, dir / "weights.sck");

    json extras = eval_extras(c);
    extras["variant"] = std::string(to_string(c.variant));
    MetricsReport report;
    if (kind == ModelKind::Classifier) {
        report = evaluate_classifier(g, data.validation, c.train.threshold);
    } else {
        ReferencePanel panel;
        if (c.variant != Variant::SnnVoting && !c.reference.empty()) {
            panel.ids = {find_image(c.reference, data.train, data.validation).id};
            panel.seed = c.train.seed;
        } else {
            panel = select_reference_panel(data.train, c.variant == Variant::SnnVoting ? c.k : 1, c.train.seed);
        }
        write_panel_manifest(dir / "panel.json", panel);
        report = vote_evaluate(g, resolve_panel(panel, data.train), data.validation, c.train.threshold);
    }
    write_metrics(dir / "metrics.json", report, extras);
    print_metrics(c.split, report);
    return 0;
}

int cmd_eval(const RunConfig& c) {
    ModelGraph g = load_trained(c);
    const auto images = load_images(c, c.split);
    MetricsReport report;
    if (g.kind() == ModelKind::Classifier) {
        report = evaluate_classifier(g, images, c.train.threshold);
    } else {
        const auto train = load_images(c, c.train_split);
        const std::string id =
            c.reference.empty() ? select_reference_panel(train, 1, c.train.seed).ids.front() : c.reference;
        const LabeledImage& ref = find_image(id, train, images);
        std::printf("reference: %s\n", ref.id.c_str());
        report = evaluate_snn(g, images, ref, c.train.threshold);
    }
    const fs::path dir = output_dir(c);
    snapshot(c, dir);
    write_metrics(dir / "metrics.json", report, eval_extras(c));
    print_metrics(c.split, report);
    return 0;
}

int cmd_vote(const RunConfig& c, const std::string& panel_path) {
    ModelGraph g = load_trained(c);
    if (g.kind() != ModelKind::Siamese) throw Error(ErrorKind::Config, "voting needs Siamese weights");
    const auto train = load_images(c, c.train_split);
    const auto images = load_images(c, c.split);
    const ReferencePanel panel =
        panel_path.empty() ? select_reference_panel(train, c.k, c.train.seed) : read_panel_manifest(panel_path);
    const auto refs = resolve_panel(panel, train);
    const MetricsReport report = vote_evaluate(g, refs, images, c.train.threshold);
    const fs::path dir = output_dir(c);
    snapshot(c, dir);
    write_panel_manifest(dir / "panel.json", panel);
    write_metrics(dir / "metrics.json", report, eval_extras(c));
    std::printf("panel of %zu references\n", panel.k());
    print_metrics(c.split, report);
    return 0;
}

int cmd_augment_preview(const RunConfig& c, const std::string& image) {
    if (image.empty()) throw Error(ErrorKind::Config, "augment-preview needs an input image");
    c.train.policy.validate();
    LabeledImage original;
    original.image = decode_and_normalize(image, c.resolution);
    const fs::path dir = output_dir(c);
    encode_png(dir / "original.png", original.image);
    for (std::size_t i = 1; i <= c.preview_count; ++i) {
        const LabeledImage out = augment(original, c.train.policy, c.train.seed, 0, i);
        char name[64];
        std::snprintf(name, sizeof name, "augmented_%zu.png", i);
        encode_png(dir / name, out.image);
    }
    std::printf("wrote original and %zu augmented images to %s\n", c.preview_count, dir.string().c_str());
    return 0;
}

int cmd_export_weights(const RunConfig& c) {
    if (c.weights.empty()) throw Error(ErrorKind::Config, "--weights is required");
    const WeightFile file = load_weights(c.weights);
    json params = json::array();
    for (const auto& e : file.entries)
        params.push_back({{"key", e.id}, {"kind", e.kind}, {"shape", e.shape}, {"values", e.values}, {"attrs", e.attrs}});
    const json doc = {{"format", "siamcheck-weights-json"}, {"version", 1}, {"attrs", file.attrs}, {"parameters", params}};
    write_text(c.out, doc.dump() + "\n");
    std::printf("exported %zu tensors to %s\n", file.entries.size(), c.out.c_str());
    return 0;
}

int cmd_import_weights(const RunConfig& c) {
    if (c.weights.empty()) throw Error(ErrorKind::Config, "--weights is required");
    const json doc = read_json(c.weights);
    WeightFile file;
    file.kind = "weights";
    try {
        if (doc.value("format", "") != "siamcheck-weights-json")
            throw Error(ErrorKind::Format, c.weights + ": not a siamcheck weights JSON document");
        file.attrs = doc.value("attrs", json::object());
        for (const auto& p : doc.at("parameters")) {
            BlobEntry e;
            e.id = p.at("key").get<std::string>();
            e.kind = p.value("kind", std::string("tensor"));
            e.shape = p.at("shape").get<Shape>();
            e.values = p.at("values").get<std::vector<float>>();
            e.attrs = p.value("attrs", json::object());
            std::size_t n = 1;
            for (auto d : e.shape) n *= d;
            if (n != e.values.size())
                throw Error(ErrorKind::Load, "tensor '" + e.id + "' has " + std::to_string(e.values.size()) +
                                                 " values for shape " + shape_to_string(e.shape));
            file.entries.push_back(std::move(e));
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Format, c.weights + ": " + e.what());
    }
    if (file.attrs.contains("config")) model_from_weights(file);
    write_container(c.out, file);
    std::printf("imported %zu tensors to %s\n", file.entries.size(), c.out.c_str());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Siamese-network image verification toolkit"};
    app.require_subcommand(1);
    Flags f;

    auto* ingest = app.add_subcommand("ingest", "decode a dataset tree into shards");
    auto* train = app.add_subcommand("train", "train a model variant");
    auto* eval = app.add_subcommand("eval", "evaluate trained weights");
    auto* vote = app.add_subcommand("vote", "evaluate with a reference panel vote");
    auto* preview = app.add_subcommand("augment-preview", "write augmented copies of one image");
    auto* exporter = app.add_subcommand("export-weights", "convert a weight file to JSON");
    auto* importer = app.add_subcommand("import-weights", "convert JSON weights to a weight file");
    for (auto* cmd : {ingest, train, eval, vote, preview, exporter, importer}) add_common(cmd, f);
    for (auto* cmd : {train, eval}) f.given["reference"].push_back(cmd->add_option("--reference", f.reference, "reference image id"));
    vote->add_option("--panel", f.panel, "reuse a panel manifest");
    preview->add_option("image", f.image, "input PNG")->required();
    f.given["count"].push_back(preview->add_option("--count", f.count, "number of augmented copies"));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_code_for(ErrorKind::Config);
    }

    try {
        const RunConfig c = resolve(f);
        if (*ingest) return cmd_ingest(c);
        if (*train) return cmd_train(c);
        if (*eval) return cmd_eval(c);
        if (*vote) return cmd_vote(c, f.panel);
        if (*preview) return cmd_augment_preview(c, f.image);
        if (*exporter) return cmd_export_weights(c);
        if (*importer) return cmd_import_weights(c);
    } catch (const Error& e) {
        std::fprintf(stderr, "siamcheck: %s\n", e.what());
        return exit_code_for(e.kind());
    } catch (const fs::filesystem_error& e) {
        std::fprintf(stderr, "siamcheck: %s\n", e.what());
        return exit_code_for(ErrorKind::Io);
    }
    return 0;
}
