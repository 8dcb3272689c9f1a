#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "unicd/fft.hpp"
#include "unicd/scan.hpp"
#include "unicd/ssm.hpp"
#include "unicd/train.hpp"

namespace py = pybind11;
using namespace unicd;

namespace {

using ArrF = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ArrI = py::array_t<int, py::array::c_style | py::array::forcecast>;

TensorPtr to_tensor(const ArrF& a) {
    std::vector<std::int64_t> shape(static_cast<std::size_t>(a.ndim()));
    for (py::ssize_t i = 0; i < a.ndim(); ++i)
        shape[static_cast<std::size_t>(i)] = a.shape(i);
    std::vector<double> data(a.data(), a.data() + a.size());
    return tensor(shape, data);
}

py::array_t<double> to_numpy(const TensorPtr& t) {
    std::vector<py::ssize_t> shape(t->shape.size());
    for (std::size_t i = 0; i < t->shape.size(); ++i)
        shape[i] = static_cast<py::ssize_t>(t->shape[i]);
    py::array_t<double> out(shape);
    std::copy(t->data.begin(), t->data.end(), out.mutable_data());
    return out;
}

std::vector<int> to_labels(const ArrI& a) {
    return std::vector<int>(a.data(), a.data() + a.size());
}

py::array_t<int> labels_to_numpy(const std::vector<int>& v, std::int64_t h, std::int64_t w) {
    py::array_t<int> out({static_cast<py::ssize_t>(h), static_cast<py::ssize_t>(w)});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

ScanDir dir_from_name(const std::string& s) {
    if (s == "row") return ScanDir::row;
    if (s == "row_rev") return ScanDir::row_rev;
    if (s == "col") return ScanDir::col;
    if (s == "col_rev") return ScanDir::col_rev;
    throw ConfigError("unknown scan direction: " + s);
}

FcpgMode fcpg_mode_from_name(const std::string& s) {
    if (s == "soft") return FcpgMode::soft;
    if (s == "hard_fixed") return FcpgMode::hard_fixed;
    if (s == "hard_single") return FcpgMode::hard_single;
    if (s == "disabled") return FcpgMode::disabled;
    throw ConfigError("unknown fcpg mode: " + s);
}

// Inference-oriented wrapper: owns the config and keeps forward passes pure.
struct PyModel {
    ModelConfig cfg;
    std::unique_ptr<Model> model;

    PyModel(const std::string& task, int classes, int damage_levels, std::uint64_t seed,
            const std::string& fcpg_mode) {
        cfg = toy_model_config();
        cfg.task = task_from_name(task);
        cfg.classes = classes;
        cfg.damage_levels = damage_levels;
        cfg.init_seed = seed;
        cfg.fcpg_mode = fcpg_mode_from_name(fcpg_mode);
        cfg.validate();
        model = std::make_unique<Model>(cfg);
    }

    py::dict forward(const ArrF& pre, const ArrF& post) {
        NoGradGuard ng;
        RunCtx ctx;
        ctx.training = false;
        auto out = model->forward(to_tensor(pre), to_tensor(post), ctx);
        py::dict d;
        if (out.change) d["change"] = to_numpy(out.change);
        if (out.sem_t1) d["sem_t1"] = to_numpy(out.sem_t1);
        if (out.sem_t2) d["sem_t2"] = to_numpy(out.sem_t2);
        if (out.loc) d["loc"] = to_numpy(out.loc);
        if (out.dmg) d["dmg"] = to_numpy(out.dmg);
        return d;
    }

    std::int64_t param_count() const { return model->params().element_count(); }
};

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "CPU change-detection core: spectral ops, selective scan, model inference";

    py::register_exception<ConfigError>(m, "ConfigError");
    py::register_exception<ShapeError>(m, "ShapeError");
    py::register_exception<DataError>(m, "DataError");

    m.def(
        "fft2d",
        [](const ArrF& x) {
            auto X = fft2d(to_tensor(x));
            return py::make_tuple(to_numpy(X.re), to_numpy(X.im));
        },
        py::arg("x"), "Per-channel 2D DFT of a [C,H,W] array -> (re, im).");

    m.def(
        "ifft2d_real",
        [](const ArrF& re, const ArrF& im) {
            return to_numpy(ifft2d_real({to_tensor(re), to_tensor(im)}));
        },
        py::arg("re"), py::arg("im"),
        "Real part of the normalized inverse DFT of a [C,H,W] spectrum.");

    m.def(
        "selective_scan",
        [](const ArrF& u, const ArrF& delta, const ArrF& A, const ArrF& B, const ArrF& C,
           const ArrF& Dskip) {
            return to_numpy(selective_scan(to_tensor(u), to_tensor(delta), to_tensor(A),
                                           to_tensor(B), to_tensor(C), to_tensor(Dskip)));
        },
        py::arg("u"), py::arg("delta"), py::arg("A"), py::arg("B"), py::arg("C"), py::arg("D"),
        "Discretized selective-SSM recurrence over a [L,D] sequence.");

    m.def(
        "scan_to_seq",
        [](const ArrF& x, const std::string& dir) {
            return to_numpy(scan_to_seq(to_tensor(x), dir_from_name(dir)));
        },
        py::arg("x"), py::arg("dir"), "[C,H,W] -> [H*W,C] in scan order (row/row_rev/col/col_rev).");

    m.def(
        "seq_to_spatial",
        [](const ArrF& s, const std::string& dir, std::int64_t h, std::int64_t w) {
            return to_numpy(seq_to_spatial(to_tensor(s), dir_from_name(dir), h, w));
        },
        py::arg("s"), py::arg("dir"), py::arg("h"), py::arg("w"),
        "Inverse of scan_to_seq for the same direction.");

    m.def(
        "cross_entropy",
        [](const ArrF& logits, const ArrI& labels, int ignore_index) {
            NoGradGuard ng;
            return cross_entropy(to_tensor(logits), to_labels(labels), {}, ignore_index)->item();
        },
        py::arg("logits"), py::arg("labels"), py::arg("ignore_index") = -1,
        "Mean cross entropy of [K,H,W] logits against flat integer labels.");

    m.def(
        "lovasz_softmax",
        [](const ArrF& probs, const ArrI& labels, int ignore_index) {
            NoGradGuard ng;
            return lovasz_softmax(to_tensor(probs), to_labels(labels), ignore_index)->item();
        },
        py::arg("probs"), py::arg("labels"), py::arg("ignore_index") = -1,
        "Multi-class Lovasz extension of the Jaccard loss on [K,H,W] probabilities.");

    m.def(
        "binary_scores",
        [](const ArrI& ref, const ArrI& pred) {
            BinaryMetrics bm;
            bm.accumulate(to_labels(ref), to_labels(pred));
            py::dict d;
            d["precision"] = bm.precision();
            d["recall"] = bm.recall();
            d["f1"] = bm.f1();
            d["iou"] = bm.iou();
            d["oa"] = bm.oa();
            d["degenerate"] = bm.degenerate;
            return d;
        },
        py::arg("ref"), py::arg("pred"), "Binary change scores from two 0/1 label arrays.");

    m.def(
        "scd_scores",
        [](const ArrI& ref, const ArrI& pred, int n_classes) {
            ConfusionMatrix q(n_classes);
            q.accumulate(to_labels(ref), to_labels(pred), -1);
            auto s = scd_metrics(q);
            py::dict d;
            d["oa"] = s.oa;
            d["miou"] = s.miou;
            d["sek"] = s.sek;
            d["f1_scd"] = s.f1_scd;
            d["degenerate"] = s.degenerate;
            return d;
        },
        py::arg("ref"), py::arg("pred"), py::arg("n_classes"),
        "Semantic change scores from semantic-change maps (0 = unchanged).");

    m.def(
        "generate_dataset",
        [](const std::string& task, int n, std::int64_t h, std::int64_t w, int classes,
           int damage_levels, std::uint64_t seed) {
            auto ds = generate_dataset(task_from_name(task), n, h, w, classes, damage_levels,
                                       seed);
            py::list out;
            for (const auto& s : ds) {
                py::dict d;
                d["pre"] = to_numpy(s.pre);
                d["post"] = to_numpy(s.post);
                d["bcd"] = labels_to_numpy(s.bcd, h, w);
                d["t1"] = labels_to_numpy(s.t1, h, w);
                d["t2"] = labels_to_numpy(s.t2, h, w);
                d["loc"] = labels_to_numpy(s.loc, h, w);
                d["dmg"] = labels_to_numpy(s.dmg, h, w);
                d["seed"] = s.seed;
                out.append(std::move(d));
            }
            return out;
        },
        py::arg("task"), py::arg("n"), py::arg("h") = 32, py::arg("w") = 32,
        py::arg("classes") = 3, py::arg("damage_levels") = 4, py::arg("seed") = 7,
        "Procedural bi-temporal samples with aligned label maps.");

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&, int, int, std::uint64_t, const std::string&>(),
             py::arg("task") = "bcd", py::arg("classes") = 3, py::arg("damage_levels") = 4,
             py::arg("seed") = 1234, py::arg("fcpg_mode") = "soft")
        .def("forward", &PyModel::forward, py::arg("pre"), py::arg("post"),
             "Run inference on [3,H,W] pre/post arrays; returns logits per head.")
        .def("param_count", &PyModel::param_count)
        .def_property_readonly("task", [](const PyModel& pm) { return task_name(pm.cfg.task); });
}
