#include "run_config.hpp"

#include <fstream>

#include "siamcheck/error.hpp"

namespace siamcheck::cli {

using nlohmann::json;

namespace {

constexpr std::pair<Variant, std::string_view> kVariants[] = {
    {Variant::CnnScratch, "cnn-scratch"},   {Variant::SnnScratch, "snn-scratch"}, {Variant::CnnTransfer, "cnn-transfer"},
    {Variant::SnnTransfer, "snn-transfer"}, {Variant::SnnVoting, "snn-voting"},
};

std::string_view to_string(Layout l) { return l == Layout::Bracket ? "bracket" : "omniglot"; }

Layout parse_layout(std::string_view text) {
    if (text == "bracket") return Layout::Bracket;
    if (text == "omniglot") return Layout::OmniglotSubset;
    throw Error(ErrorKind::Config, "unknown layout '" + std::string(text) + "'");
}

std::string_view to_string(FillMode f) { return f == FillMode::Nearest ? "nearest" : "constant"; }

FillMode parse_fill(std::string_view text) {
    if (text == "nearest") return FillMode::Nearest;
    if (text == "constant") return FillMode::Constant;
    throw Error(ErrorKind::Config, "unknown fill mode '" + std::string(text) + "'");
}

json policy_json(const AugmentationPolicy& p) {
    return {{"rotation_deg", p.rotation_deg},
            {"translate_frac", p.translate_frac},
            {"zoom_frac", p.zoom_frac},
            {"shear", p.shear},
            {"brightness", {p.brightness_lo, p.brightness_hi}},
            {"hflip", p.hflip},
            {"vflip", p.vflip},
            {"crop", p.crop},
            {"fill", std::string(to_string(p.fill))},
            {"fill_value", p.fill_value}};
}

AugmentationPolicy policy_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Config, "augmentation must be an object");
    AugmentationPolicy p;
    for (const auto& [key, v] : j.items()) {
        if (key == "rotation_deg") p.rotation_deg = v.get<double>();
        else if (key == "translate_frac") p.translate_frac = v.get<double>();
        else if (key == "zoom_frac") p.zoom_frac = v.get<double>();
        else if (key == "shear") p.shear = v.get<double>();
        else if (key == "brightness") {
            const auto r = v.get<std::vector<double>>();
            if (r.size() != 2) throw Error(ErrorKind::Config, "augmentation.brightness needs [lo, hi]");
            p.brightness_lo = r[0];
            p.brightness_hi = r[1];
        } else if (key == "hflip") p.hflip = v.get<bool>();
        else if (key == "vflip") p.vflip = v.get<bool>();
        else if (key == "crop") p.crop = v.get<bool>();
        else if (key == "fill") p.fill = parse_fill(v.get<std::string>());
        else if (key == "fill_value") p.fill_value = v.get<float>();
        else throw Error(ErrorKind::Config, "unknown key 'augmentation." + key + "'");
    }
    return p;
}

} // namespace

std::string_view to_string(Variant v) {
    for (const auto& [value, name] : kVariants)
        if (value == v) return name;
    return "unknown";
}

Variant parse_variant(std::string_view text) {
    for (const auto& [value, name] : kVariants)
        if (name == text) return value;
    throw Error(ErrorKind::Config, "unknown variant '" + std::string(text) + "'");
}

ModelKind model_kind_of(Variant v) {
    return v == Variant::CnnScratch || v == Variant::CnnTransfer ? ModelKind::Classifier : ModelKind::Siamese;
}

bool is_transfer(Variant v) {
    return v == Variant::CnnTransfer || v == Variant::SnnTransfer || v == Variant::SnnVoting;
}

void RunConfig::validate() const {
    train.validate();
    if (architecture != "vgg16" && architecture != "desk")
        throw Error(ErrorKind::Config, "unknown architecture '" + architecture + "'");
    if (resolution != 64 && resolution != 128 && resolution != 256)
        throw Error(ErrorKind::Config, "resolution must be 64, 128 or 256");
    if (k == 0) throw Error(ErrorKind::Config, "k must be at least 1");
    if (preview_count == 0) throw Error(ErrorKind::Config, "preview_count must be at least 1");
    if (layout == Layout::OmniglotSubset && !alphabets.empty() && alphabets.size() != 2)
        throw Error(ErrorKind::Config, "omniglot layout needs exactly two alphabets");
}

json RunConfig::to_json() const {
    return {{"seed", train.seed},
            {"epochs", train.epochs},
            {"batch_size", train.batch_size},
            {"lr", train.lr},
            {"threshold", train.threshold},
            {"pairs", std::string(siamcheck::to_string(train.pair_regime))},
            {"augment", train.augment},
            {"augmentation", policy_json(train.policy)},
            {"pairs_per_epoch", train.pairs_per_epoch},
            {"validation_pairs", train.validation_pairs},
            {"record_wall_clock", train.record_wall_clock},
            {"dataset_root", dataset_root},
            {"layout", std::string(to_string(layout))},
            {"alphabets", alphabets},
            {"variant", std::string(cli::to_string(variant))},
            {"architecture", architecture},
            {"head", std::string(siamcheck::to_string(head))},
            {"freeze", std::string(siamcheck::to_string(freeze))},
            {"k", k},
            {"resolution", resolution},
            {"split", split},
            {"train_split", train_split},
            {"weights", weights},
            {"reference", reference},
            {"out", out},
            {"preview_count", preview_count},
            {"init_seed", init_seed}};
}

RunConfig RunConfig::from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorKind::Config, "config must be a JSON object");
    RunConfig c;
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "seed") c.train.seed = v.get<std::uint64_t>();
            else if (key == "epochs") c.train.epochs = v.get<std::size_t>();
            else if (key == "batch_size") c.train.batch_size = v.get<std::size_t>();
            else if (key == "lr") c.train.lr = v.get<float>();
            else if (key == "threshold") c.train.threshold = v.get<double>();
            else if (key == "pairs") c.train.pair_regime = parse_pair_regime(v.get<std::string>());
            else if (key == "augment") c.train.augment = v.get<bool>();
            else if (key == "augmentation") c.train.policy = policy_from_json(v);
            else if (key == "pairs_per_epoch") c.train.pairs_per_epoch = v.get<std::size_t>();
            else if (key == "validation_pairs") c.train.validation_pairs = v.get<std::size_t>();
            else if (key == "record_wall_clock") c.train.record_wall_clock = v.get<bool>();
            else if (key == "dataset_root") c.dataset_root = v.get<std::string>();
            else if (key == "layout") c.layout = parse_layout(v.get<std::string>());
            else if (key == "alphabets") c.alphabets = v.get<std::vector<std::string>>();
            else if (key == "variant") c.variant = parse_variant(v.get<std::string>());
            else if (key == "architecture") c.architecture = v.get<std::string>();
            else if (key == "head") c.head = parse_head_mode(v.get<std::string>());
            else if (key == "freeze") c.freeze = parse_freeze_policy(v.get<std::string>());
            else if (key == "k") c.k = v.get<std::size_t>();
            else if (key == "resolution") c.resolution = v.get<std::size_t>();
            else if (key == "split") c.split = v.get<std::string>();
            else if (key == "train_split") c.train_split = v.get<std::string>();
            else if (key == "weights") c.weights = v.get<std::string>();
            else if (key == "reference") c.reference = v.get<std::string>();
            else if (key == "out") c.out = v.get<std::string>();
            else if (key == "preview_count") c.preview_count = v.get<std::size_t>();
            else if (key == "init_seed") c.init_seed = v.get<std::uint64_t>();
            else throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
        }
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, std::string("config value has the wrong type: ") + e.what());
    }
    return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Config, "cannot open config '" + path.string() + "'");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(ErrorKind::Config, path.string() + ": " + e.what());
    }
    return from_json(j);
}

ModelConfig RunConfig::model_config() const {
    ModelConfig m = architecture == "desk"            ? ModelConfig::desk()
                    : is_transfer(variant) ? ModelConfig::vgg16_transfer(model_kind_of(variant))
                                           : ModelConfig::vgg16();
    m.head = head;
    m.init_seed = init_seed;
    return m;
}

} // namespace siamcheck::cli
