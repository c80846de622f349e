#include <memory>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "siamcheck/error.hpp"
#include "siamcheck/voting.hpp"
#include "siamcheck/weights.hpp"

namespace py = pybind11;
using namespace siamcheck;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

FloatArray to_numpy(const Shape& shape, std::span<const float> values) {
    std::vector<py::ssize_t> dims(shape.begin(), shape.end());
    FloatArray out(dims);
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

FloatArray image_to_numpy(const Image& img) { return to_numpy({img.height, img.width, 3}, img.pixels); }

Image image_from_numpy(const FloatArray& a) {
    if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorKind::Dimension, "image array must be HxWx3");
    Image img;
    img.height = static_cast<std::size_t>(a.shape(0));
    img.width = static_cast<std::size_t>(a.shape(1));
    img.pixels.assign(a.data(), a.data() + a.size());
    return img;
}

Tensor tensor_from_numpy(const FloatArray& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(std::move(shape), std::vector<float>(a.data(), a.data() + a.size()));
}

py::dict metrics_dict(const MetricsReport& m) {
    py::dict d;
    d["tp"] = m.counts.tp;
    d["fp"] = m.counts.fp;
    d["tn"] = m.counts.tn;
    d["fn"] = m.counts.fn;
    d["accuracy"] = m.accuracy;
    d["precision"] = m.precision;
    d["recall"] = m.recall;
    d["fdr"] = m.fdr;
    d["fnr"] = m.fnr;
    return d;
}

py::list logs_list(const TrainResult& r) {
    py::list out;
    for (const auto& l : r.logs) {
        py::dict d;
        d["epoch"] = l.epoch;
        d["train_loss"] = l.train_loss;
        d["train_acc"] = l.train_acc;
        d["val_acc"] = l.val_acc;
        d["seconds"] = l.seconds;
        out.append(d);
    }
    return out;
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Siamese-network image verification toolkit";

    static py::handle error_type = py::exception<Error>(m, "SiamcheckError").release();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            py::object exc = py::reinterpret_borrow<py::object>(error_type)(e.what());
            exc.attr("kind") = std::string(to_string(e.kind()));
            exc.attr("exit_code") = exit_code_for(e.kind());
            PyErr_SetObject(error_type.ptr(), exc.ptr());
        }
    });

    py::enum_<ImageClass>(m, "ImageClass").value("CORRECT", ImageClass::Correct).value("INCORRECT", ImageClass::Incorrect);
    py::enum_<ModelKind>(m, "ModelKind").value("CLASSIFIER", ModelKind::Classifier).value("SIAMESE", ModelKind::Siamese);
    py::enum_<PairRegime>(m, "PairRegime")
        .value("RANDOM", PairRegime::Random)
        .value("REFERENCE_ANCHORED", PairRegime::ReferenceAnchored);
    py::enum_<FreezePolicy>(m, "FreezePolicy")
        .value("NONE", FreezePolicy::None)
        .value("ALL_BUT_LAST_BLOCK", FreezePolicy::AllButLastBlock);
    py::enum_<HeadMode>(m, "HeadMode").value("SCALAR_L1", HeadMode::ScalarL1).value("WEIGHTED_L1", HeadMode::WeightedL1);
    py::enum_<FillMode>(m, "FillMode").value("NEAREST", FillMode::Nearest).value("CONSTANT", FillMode::Constant);

    py::class_<LabeledImage>(m, "LabeledImage")
        .def(py::init<>())
        .def_property(
            "image", [](const LabeledImage& i) { return image_to_numpy(i.image); },
            [](LabeledImage& i, const FloatArray& a) { i.image = image_from_numpy(a); })
        .def_readwrite("label", &LabeledImage::label)
        .def_readwrite("subclass", &LabeledImage::subclass)
        .def_readwrite("split", &LabeledImage::split)
        .def_readwrite("id", &LabeledImage::id)
        .def("__repr__", [](const LabeledImage& i) {
            return "<LabeledImage " + i.id + " " + std::string(to_string(i.label)) + ">";
        });

    py::class_<Dataset>(m, "Dataset")
        .def(py::init<>())
        .def_readwrite("train", &Dataset::train)
        .def_readwrite("validation", &Dataset::validation);

    py::class_<SyntheticSpec>(m, "SyntheticSpec")
        .def(py::init<>())
        .def_readwrite("resolution", &SyntheticSpec::resolution)
        .def_readwrite("train_per_class", &SyntheticSpec::train_per_class)
        .def_readwrite("validation_per_class", &SyntheticSpec::validation_per_class)
        .def_readwrite("incorrect_subclasses", &SyntheticSpec::incorrect_subclasses)
        .def_readwrite("noise", &SyntheticSpec::noise)
        .def_readwrite("seed", &SyntheticSpec::seed);

    py::class_<AugmentationPolicy>(m, "AugmentationPolicy")
        .def(py::init<>())
        .def_static("identity", &AugmentationPolicy::identity)
        .def_readwrite("rotation_deg", &AugmentationPolicy::rotation_deg)
        .def_readwrite("translate_frac", &AugmentationPolicy::translate_frac)
        .def_readwrite("zoom_frac", &AugmentationPolicy::zoom_frac)
        .def_readwrite("shear", &AugmentationPolicy::shear)
        .def_readwrite("brightness_lo", &AugmentationPolicy::brightness_lo)
        .def_readwrite("brightness_hi", &AugmentationPolicy::brightness_hi)
        .def_readwrite("hflip", &AugmentationPolicy::hflip)
        .def_readwrite("vflip", &AugmentationPolicy::vflip)
        .def_readwrite("crop", &AugmentationPolicy::crop)
        .def_readwrite("fill", &AugmentationPolicy::fill)
        .def_readwrite("fill_value", &AugmentationPolicy::fill_value);

    py::class_<ModelConfig>(m, "ModelConfig")
        .def(py::init<>())
        .def_static("vgg16", &ModelConfig::vgg16)
        .def_static("vgg16_transfer", &ModelConfig::vgg16_transfer, py::arg("kind"))
        .def_static("desk", &ModelConfig::desk)
        .def_readwrite("block_filters", &ModelConfig::block_filters)
        .def_readwrite("convs_per_block", &ModelConfig::convs_per_block)
        .def_readwrite("conv_dropout", &ModelConfig::conv_dropout)
        .def_readwrite("feature_units", &ModelConfig::feature_units)
        .def_readwrite("feature_dropout", &ModelConfig::feature_dropout)
        .def_readwrite("head", &ModelConfig::head)
        .def_readwrite("init_seed", &ModelConfig::init_seed);

    py::class_<TrainConfig>(m, "TrainConfig")
        .def(py::init<>())
        .def_readwrite("epochs", &TrainConfig::epochs)
        .def_readwrite("batch_size", &TrainConfig::batch_size)
        .def_readwrite("lr", &TrainConfig::lr)
        .def_readwrite("threshold", &TrainConfig::threshold)
        .def_readwrite("pair_regime", &TrainConfig::pair_regime)
        .def_readwrite("seed", &TrainConfig::seed)
        .def_readwrite("augment", &TrainConfig::augment)
        .def_readwrite("policy", &TrainConfig::policy)
        .def_readwrite("pairs_per_epoch", &TrainConfig::pairs_per_epoch)
        .def_readwrite("validation_pairs", &TrainConfig::validation_pairs)
        .def_readwrite("record_wall_clock", &TrainConfig::record_wall_clock);

    py::class_<ModelGraph, std::unique_ptr<ModelGraph>>(m, "Model")
        .def_property_readonly("kind", &ModelGraph::kind)
        .def_property_readonly("input_shape", &ModelGraph::input_shape)
        .def_property_readonly("parameter_count", &ModelGraph::parameter_count)
        .def_property_readonly("trainable_parameter_count", &ModelGraph::trainable_parameter_count)
        .def("parameter_keys",
             [](const ModelGraph& g) {
                 std::vector<std::string> keys;
                 for (const auto& p : g.parameters()) keys.push_back(p.key);
                 return keys;
             })
        .def("get_parameter",
             [](const ModelGraph& g, const std::string& key) {
                 const Tensor& t = g.parameter(key);
                 return to_numpy(t.shape(), t.data());
             })
        .def("set_parameter",
             [](ModelGraph& g, const std::string& key, const FloatArray& a) {
                 Tensor& t = g.parameter(key);
                 const Tensor src = tensor_from_numpy(a);
                 if (src.shape() != t.shape())
                     throw Error(ErrorKind::Dimension, key + " expects shape " + shape_to_string(t.shape()));
                 std::copy(src.data().begin(), src.data().end(), t.data().begin());
             })
        .def("layer_trainable", &ModelGraph::layer_trainable)
        .def("apply_freeze_policy", &ModelGraph::apply_freeze_policy)
        .def("predict_classifier",
             [](ModelGraph& g, const FloatArray& batch) { return predict_classifier(g, tensor_from_numpy(batch)); })
        .def("predict_similarity",
             [](ModelGraph& g, const FloatArray& a, const FloatArray& b) {
                 return predict_similarity(g, tensor_from_numpy(a), tensor_from_numpy(b));
             })
        .def("features",
             [](ModelGraph& g, const FloatArray& batch) {
                 const Tensor f = predict_features(g, tensor_from_numpy(batch));
                 return to_numpy(f.shape(), f.data());
             })
        .def("save", [](const ModelGraph& g, const std::filesystem::path& p) { save_weights(g, p); })
        .def("load_transfer",
             [](ModelGraph& g, const std::filesystem::path& p, FreezePolicy policy) {
                 apply_transfer(g, load_weights(p), policy);
             },
             py::arg("path"), py::arg("policy") = FreezePolicy::AllButLastBlock);

    m.def(
        "build_model",
        [](ModelKind kind, std::size_t resolution, const ModelConfig& config) {
            return std::make_unique<ModelGraph>(build_model(kind, {resolution, resolution, 3}, config));
        },
        py::arg("kind"), py::arg("resolution") = 64, py::arg("config") = ModelConfig::desk());
    m.def(
        "load_model", [](const std::filesystem::path& p) { return std::make_unique<ModelGraph>(model_from_weights(p)); },
        py::arg("path"));

    m.def("make_synthetic_dataset", &make_synthetic_dataset, py::arg("spec") = SyntheticSpec{});
    m.def("write_dataset_tree", &write_dataset_tree, py::arg("root"), py::arg("dataset"));
    m.def(
        "load_split",
        [](const std::filesystem::path& root, const std::string& split, std::size_t resolution, std::uint64_t seed) {
            return load_split(load_dataset_index(root, Layout::Bracket, seed), split, resolution);
        },
        py::arg("root"), py::arg("split"), py::arg("resolution") = 64, py::arg("seed") = 0);
    m.def("read_shard", &read_shard, py::arg("path"));
    m.def("write_shard", &write_shard, py::arg("path"), py::arg("images"));
    m.def(
        "decode_png", [](const std::filesystem::path& p) { return image_to_numpy(decode_png(p)); }, py::arg("path"));
    m.def(
        "encode_png", [](const std::filesystem::path& p, const FloatArray& a) { encode_png(p, image_from_numpy(a)); },
        py::arg("path"), py::arg("image"));
    m.def(
        "augment",
        [](const FloatArray& image, const AugmentationPolicy& policy, std::uint64_t seed, std::uint64_t epoch,
           std::uint64_t index) {
            const AugmentParams params = sample_augment_params(policy, seed, epoch, index);
            return image_to_numpy(apply_augment(image_from_numpy(image), params, policy.fill, policy.fill_value));
        },
        py::arg("image"), py::arg("policy") = AugmentationPolicy{}, py::arg("seed") = 0, py::arg("epoch") = 0,
        py::arg("index") = 0);

    m.def(
        "train_classifier",
        [](ModelGraph& g, const Dataset& d, const TrainConfig& c) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train_classifier(g, d, c);
            }
            return logs_list(r);
        },
        py::arg("model"), py::arg("dataset"), py::arg("config") = TrainConfig{});
    m.def(
        "train_snn",
        [](ModelGraph& g, const Dataset& d, const TrainConfig& c) {
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = train_snn(g, d, c);
            }
            return logs_list(r);
        },
        py::arg("model"), py::arg("dataset"), py::arg("config") = TrainConfig{});

    m.def(
        "compute_metrics",
        [](std::uint64_t tp, std::uint64_t fp, std::uint64_t tn, std::uint64_t fn) {
            return metrics_dict(compute_metrics({tp, fp, tn, fn}));
        },
        py::arg("tp"), py::arg("fp"), py::arg("tn"), py::arg("fn"));
    m.def(
        "evaluate_classifier",
        [](ModelGraph& g, const std::vector<LabeledImage>& images, double thr) {
            return metrics_dict(evaluate_classifier(g, images, thr));
        },
        py::arg("model"), py::arg("images"), py::arg("threshold") = 0.5);
    m.def(
        "evaluate_snn",
        [](ModelGraph& g, const std::vector<LabeledImage>& images, const LabeledImage& ref, double thr) {
            return metrics_dict(evaluate_snn(g, images, ref, thr));
        },
        py::arg("model"), py::arg("images"), py::arg("reference"), py::arg("threshold") = 0.5);
    m.def(
        "select_reference_panel",
        [](const std::vector<LabeledImage>& train, std::size_t k, std::uint64_t seed) {
            return resolve_panel(select_reference_panel(train, k, seed), train);
        },
        py::arg("train"), py::arg("k"), py::arg("seed") = 0);
    m.def(
        "vote_evaluate",
        [](ModelGraph& g, const std::vector<LabeledImage>& panel, const std::vector<LabeledImage>& images, double thr) {
            return metrics_dict(vote_evaluate(g, panel, images, thr));
        },
        py::arg("model"), py::arg("panel"), py::arg("images"), py::arg("threshold") = 0.5);
    m.def(
        "tally_votes",
        [](std::vector<float> scores, double thr) {
            const VoteResult v = tally_votes(std::move(scores), thr);
            return py::make_tuple(v.verdict, v.same_count);
        },
        py::arg("scores"), py::arg("threshold") = 0.5);
}
