// SPDX-License-Identifier: Apache-2.0
#include "symgrade/cli.hpp"
#include "symgrade/data.hpp"
#include "symgrade/diagnostics.hpp"
#include "symgrade/errors.hpp"
#include "symgrade/losses.hpp"
#include "symgrade/metrics.hpp"
#include "symgrade/optim.hpp"

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace symgrade;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

Array to_array(const Tensor& t) {
    Array out(std::vector<py::ssize_t>(t.shape().begin(), t.shape().end()));
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

std::vector<GradeLabel> to_labels(const std::vector<int>& v) {
    return {v.begin(), v.end()};
}

Tensor as_batch_images(const Array& images) {
    if (images.ndim() != 3) throw ShapeError("images must have shape (N, H, W)");
    Tensor t = to_tensor(images);
    return t.reshaped({t.dim(0), 1, t.dim(1), t.dim(2)});
}

py::dict breakdown_dict(const LossBreakdown& b) {
    py::dict d;
    d["l_original"] = b.l_original;
    d["l_flipped"] = b.l_flipped;
    d["l_symmetry"] = b.l_symmetry;
    d["l_consistency"] = b.l_consistency;
    d["l_total"] = b.l_total;
    d["lambda"] = b.lambda;
    return d;
}

} // namespace

PYBIND11_MODULE(_symgrade, m) {
    m.doc() = "Flip-consistent grading toolkit: native core";

    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);
    py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.attr("NUM_GRADES") = kNumGrades;
    m.attr("DEFAULT_LAMBDA") = kDefaultLambda;

    m.def("grade_name", [](int g) { return std::string(grade_name(g)); });

    m.def(
        "generate_synthetic",
        [](std::size_t n, std::size_t size, double asymmetry, double noise, std::uint64_t seed) {
            SyntheticSpec spec{n, size, size, asymmetry, noise, seed};
            const auto samples = generate_synthetic(spec);
            Array images({n, size, size});
            std::vector<int> grades;
            std::vector<std::string> ids;
            double* dst = images.mutable_data();
            for (const auto& s : samples) {
                dst = std::copy(s.pixels.begin(), s.pixels.end(), dst);
                grades.push_back(s.grade.value());
                ids.push_back(s.id);
            }
            return py::make_tuple(images, grades, ids);
        },
        py::arg("n") = 1000, py::arg("size") = 32, py::arg("asymmetry") = 0.5, py::arg("noise") = 0.05,
        py::arg("seed") = 42, "Returns (images[N,H,W], grades, ids).");

    m.def(
        "flip_horizontal",
        [](const Array& images) {
            Batch b;
            b.images = as_batch_images(images);
            b.labels.resize(b.images.dim(0));
            b.ids.resize(b.images.dim(0));
            const Tensor f = flip_horizontal(b).images;
            return to_array(f.reshaped({f.dim(0), f.dim(2), f.dim(3)}));
        },
        py::arg("images"));

    m.def(
        "stratified_split",
        [](const std::vector<int>& grades, double train, double val, double test, std::uint64_t seed) {
            std::vector<ImageSample> samples(grades.size());
            for (std::size_t i = 0; i < grades.size(); ++i) {
                samples[i].id = std::to_string(i);
                samples[i].height = samples[i].width = 1;
                samples[i].pixels = {0.0};
                samples[i].grade = GradeLabel(grades[i]);
            }
            const Split s = stratified_split(samples, SplitSpec{train, val, test, seed, true});
            auto idx = [](const std::vector<ImageSample>& part) {
                std::vector<std::size_t> out;
                for (const auto& x : part) out.push_back(std::stoul(x.id));
                return out;
            };
            return py::make_tuple(idx(s.train), idx(s.val), idx(s.test));
        },
        py::arg("grades"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2,
        py::arg("seed") = 0, "Returns index lists (train, val, test).");

    m.def("softmax_rows", [](const Array& s) { return to_array(softmax_rows(to_tensor(s))); });
    m.def(
        "cross_entropy_mean",
        [](const Array& s, const std::vector<int>& labels) {
            return cross_entropy_mean(to_tensor(s), one_hot(to_labels(labels), s.shape(1)));
        },
        py::arg("scores"), py::arg("labels"));
    m.def("jsd_mean", [](const Array& p, const Array& q) { return jsd_mean(to_tensor(p), to_tensor(q)); });
    m.def("consistency_loss",
          [](const Array& s, const Array& s_h) { return consistency_loss(to_tensor(s), to_tensor(s_h)); });
    m.def(
        "total_loss",
        [](const Array& s, const Array& s_h, const std::vector<int>& labels, double lambda) {
            return breakdown_dict(
                total_loss(to_tensor(s), to_tensor(s_h), one_hot(to_labels(labels), s.shape(1)), lambda));
        },
        py::arg("scores"), py::arg("flipped_scores"), py::arg("labels"), py::arg("lam") = kDefaultLambda);

    m.def(
        "onecycle_lr",
        [](std::uint64_t step, std::uint64_t total, double base_lr, double pct_start, double div_factor,
           double final_div_factor) {
            TrainConfig cfg;
            cfg.base_lr = base_lr;
            cfg.pct_start = pct_start;
            cfg.div_factor = div_factor;
            cfg.final_div_factor = final_div_factor;
            return onecycle_lr(step, total, cfg);
        },
        py::arg("step"), py::arg("total_steps"), py::arg("base_lr") = 1e-5, py::arg("pct_start") = 0.3,
        py::arg("div_factor") = 25.0, py::arg("final_div_factor") = 1e4);

    m.def(
        "confusion_matrix",
        [](const std::vector<int>& preds, const std::vector<int>& truths, std::size_t k) {
            const ConfusionMatrix cm = confusion_matrix(to_labels(preds), to_labels(truths), k);
            py::array_t<std::uint64_t> out({k, k});
            for (std::size_t i = 0; i < k; ++i)
                for (std::size_t j = 0; j < k; ++j) out.mutable_at(i, j) = cm.at(i, j);
            return out;
        },
        py::arg("preds"), py::arg("truths"), py::arg("k") = kNumGrades);

    m.def(
        "prf_report",
        [](const std::vector<int>& preds, const std::vector<int>& truths, std::size_t k) {
            const MetricsReport r = prf_report(confusion_matrix(to_labels(preds), to_labels(truths), k));
            py::dict d;
            d["samples"] = r.samples;
            d["accuracy"] = r.accuracy;
            d["precision"] = r.precision;
            d["recall"] = r.recall;
            d["f1"] = r.f1;
            d["macro_precision"] = r.macro_precision;
            d["macro_recall"] = r.macro_recall;
            d["macro_f1"] = r.macro_f1;
            d["micro_f1"] = r.micro_f1;
            d["degenerate_classes"] = r.degenerate_classes;
            return d;
        },
        py::arg("preds"), py::arg("truths"), py::arg("k") = kNumGrades);

    m.def(
        "gradcheck",
        [](std::uint64_t seed, bool model) {
            std::vector<std::pair<std::string, double>> out;
            for (const auto& c : check_loss_gradients(seed, model ? GradCheckTarget::model
                                                                  : GradCheckTarget::similarities))
                out.emplace_back(c.component, c.max_rel_error);
            return out;
        },
        py::arg("seed") = 0, py::arg("model") = true);

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(args, out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a subcommand in-process; returns (exit_code, stdout, stderr).");
}
