#include <algorithm>
#include <cmath>

#include <png.h>

#include "siamcheck/container.hpp"
#include "siamcheck/data.hpp"
#include "siamcheck/error.hpp"

namespace siamcheck {

namespace fs = std::filesystem;

const std::vector<ImageRecord>& DatasetIndex::split(const std::string& name) const {
    auto it = splits.find(name);
    if (it == splits.end()) throw Error(ErrorKind::Layout, "dataset has no split '" + name + "'");
    return it->second;
}

std::size_t DatasetIndex::count(const std::string& name, ImageClass label) const {
    if (!has_split(name)) return 0;
    const auto& records = split(name);
    return static_cast<std::size_t>(
        std::count_if(records.begin(), records.end(), [&](const ImageRecord& r) { return r.label == label; }));
}

std::map<std::string, std::size_t> DatasetIndex::subclass_counts(const std::string& name) const {
    std::map<std::string, std::size_t> out;
    for (const auto& r : split(name)) ++out[std::string(to_string(r.label)) + (r.subclass.empty() ? "" : "/" + r.subclass)];
    return out;
}

namespace {

bool is_png_name(const fs::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".png";
}

bool readable_png(const fs::path& p) {
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&png, p.c_str())) return false;
    png_image_free(&png);
    return true;
}

std::vector<fs::path> sorted_entries(const fs::path& dir, bool directories) {
    std::vector<fs::path> out;
    std::error_code ec;
    for (const auto& e : fs::directory_iterator(dir, ec)) {
        if (directories ? e.is_directory() : e.is_regular_file()) out.push_back(e.path());
    }
    if (ec) throw Error(ErrorKind::Io, "cannot list '" + dir.string() + "': " + ec.message());
    std::sort(out.begin(), out.end());
    return out;
}

void add_files(DatasetIndex& index, const fs::path& dir, ImageClass label, const std::string& subclass,
               const std::string& split, std::vector<ImageRecord>& out) {
    for (const auto& file : sorted_entries(dir, false)) {
        if (!is_png_name(file)) continue;
        if (!readable_png(file)) {
            index.unreadable.push_back(file);
            continue;
        }
        out.push_back({file, label, subclass, split, fs::relative(file, index.root).generic_string()});
    }
}

std::vector<ImageRecord> scan_class(DatasetIndex& index, const fs::path& dir, ImageClass label,
                                    const std::string& split) {
    std::vector<ImageRecord> out;
    add_files(index, dir, label, "", split, out);
    for (const auto& sub : sorted_entries(dir, true)) add_files(index, sub, label, sub.filename().string(), split, out);
    if (out.empty()) throw Error(ErrorKind::EmptyClass, "no images in '" + dir.string() + "'");
    return out;
}

} // namespace

DatasetIndex load_dataset_index(const fs::path& root, Layout layout, std::uint64_t seed) {
    if (layout == Layout::OmniglotSubset) return build_omniglot_subset(root, {"Latin", "Greek"}, seed);
    if (!fs::is_directory(root)) throw Error(ErrorKind::Layout, "dataset root '" + root.string() + "' is not a directory");

    DatasetIndex index;
    index.layout = layout;
    index.root = root;
    index.seed = seed;
    for (const auto& split : kBracketSplits) {
        const fs::path dir = root / split;
        const bool edge = split.rfind("edge-", 0) == 0;
        if (!fs::is_directory(dir)) {
            if (edge) continue;
            throw Error(ErrorKind::Layout, "missing split directory '" + dir.string() + "'");
        }
        std::vector<ImageRecord> records;
        const fs::path correct = dir / "correct";
        if (fs::is_directory(correct)) {
            records = scan_class(index, correct, ImageClass::Correct, split);
        } else if (edge) {
            const std::string main = split.substr(5);
            for (auto r : index.splits.at(main))
                if (r.label == ImageClass::Correct) {
                    r.split = split;
                    records.push_back(std::move(r));
                }
        } else {
            throw Error(ErrorKind::Layout, "missing class directory '" + correct.string() + "'");
        }
        const fs::path incorrect = dir / "incorrect";
        if (!fs::is_directory(incorrect))
            throw Error(ErrorKind::Layout, "missing class directory '" + incorrect.string() + "'");
        auto bad = scan_class(index, incorrect, ImageClass::Incorrect, split);
        records.insert(records.end(), bad.begin(), bad.end());
        index.splits[split] = std::move(records);
    }
    return index;
}

DatasetIndex build_omniglot_subset(const fs::path& root, const std::vector<std::string>& alphabets,
                                   std::uint64_t seed) {
    if (alphabets.size() != 2) throw Error(ErrorKind::Config, "alphabet verification needs exactly two alphabets");
    DatasetIndex index;
    index.layout = Layout::OmniglotSubset;
    index.root = root;
    index.seed = seed;
    auto& train = index.splits["train"];
    auto& validation = index.splits["validation"];
    for (std::size_t a = 0; a < alphabets.size(); ++a) {
        const fs::path dir = root / alphabets[a];
        if (!fs::is_directory(dir)) throw Error(ErrorKind::Layout, "missing alphabet directory '" + dir.string() + "'");
        const ImageClass label = a == 0 ? ImageClass::Correct : ImageClass::Incorrect;
        auto characters = sorted_entries(dir, true);
        if (characters.empty()) throw Error(ErrorKind::EmptyClass, "no characters in '" + dir.string() + "'");
        Rng rng = make_rng({seed, 0x0A1F, a});
        shuffle(characters.begin(), characters.end(), rng);
        std::size_t n_train = static_cast<std::size_t>(std::lround(0.7 * static_cast<double>(characters.size())));
        if (characters.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, characters.size() - 1);
        std::size_t images = 0;
        for (std::size_t c = 0; c < characters.size(); ++c) {
            const std::string split = c < n_train ? "train" : "validation";
            auto& out = c < n_train ? train : validation;
            const std::size_t before = out.size();
            add_files(index, characters[c], label, characters[c].filename().string(), split, out);
            images += out.size() - before;
        }
        if (images == 0) throw Error(ErrorKind::EmptyClass, "no images in '" + dir.string() + "'");
    }
    return index;
}

std::vector<LabeledImage> load_split(const DatasetIndex& index, const std::string& split, std::size_t resolution) {
    std::vector<LabeledImage> out;
    for (const auto& r : index.split(split))
        out.push_back({decode_and_normalize(r.path, resolution), r.label, r.subclass, r.split, r.id});
    return out;
}

void write_shard(const fs::path& path, const std::vector<LabeledImage>& images) {
    Container c;
    c.kind = "shard";
    for (const auto& img : images) {
        BlobEntry e;
        e.id = img.id;
        e.kind = "image";
        e.shape = {img.image.height, img.image.width, 3};
        e.values = img.image.pixels;
        e.attrs = {{"label", std::string(to_string(img.label))}, {"subclass", img.subclass}, {"split", img.split}};
        c.entries.push_back(std::move(e));
    }
    write_container(path, c);
}

std::vector<LabeledImage> read_shard(const fs::path& path) {
    const Container c = read_container(path);
    if (c.kind != "shard") throw Error(ErrorKind::Format, path.string() + ": container holds '" + c.kind + "', not a shard");
    std::vector<LabeledImage> out;
    for (const auto& e : c.entries) {
        if (e.shape.size() != 3 || e.shape[2] != 3)
            throw Error(ErrorKind::Load, path.string() + ": entry '" + e.id + "' is not an HxWx3 image");
        LabeledImage img;
        img.image.height = e.shape[0];
        img.image.width = e.shape[1];
        img.image.pixels = e.values;
        img.label = parse_image_class(e.attrs.value("label", std::string("correct")));
        img.subclass = e.attrs.value("subclass", std::string{});
        img.split = e.attrs.value("split", std::string{});
        img.id = e.id;
        out.push_back(std::move(img));
    }
    return out;
}

void write_dataset_tree(const fs::path& root, const Dataset& dataset) {
    for (const auto* part : {&dataset.train, &dataset.validation}) {
        for (const auto& img : *part) {
            fs::path dir = root / img.split / std::string(to_string(img.label));
            if (!img.subclass.empty()) dir /= img.subclass;
            fs::create_directories(dir);
            encode_png(dir / (fs::path(img.id).filename().string() + ".png"), img.image);
        }
    }
}

} // namespace siamcheck
