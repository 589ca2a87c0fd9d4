#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "dctcn/config.hpp"
#include "dctcn/errors.hpp"
#include "dctcn/experiment.hpp"
#include "dctcn/gradcheck.hpp"
#include "dctcn/rf.hpp"
#include "dctcn/training.hpp"

namespace py = pybind11;
using namespace dctcn;
using namespace pybind11::literals;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Array to_numpy(const Tensor& t) {
    std::vector<py::ssize_t> shape(t.shape().begin(), t.shape().end());
    Array out(shape);
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Tensor from_numpy(const Array& a) {
    Shape shape(a.shape(), a.shape() + a.ndim());
    return Tensor(shape, std::vector<double>(a.data(), a.data() + a.size()));
}

py::dict profile_dict(const RFProfile& p) {
    py::dict d;
    d["scales"] = p.scales;
    d["distinct"] = p.distinct();
    d["max"] = p.max_scale;
    d["distinct_count"] = p.distinct_count;
    return d;
}

py::dict split_dict(const std::vector<Sample>& samples) {
    if (samples.empty()) return py::dict("x"_a = Array(std::vector<py::ssize_t>{0, 0, 0}), "y"_a = py::array_t<std::int64_t>(0));
    const std::size_t n = samples.size(), T = samples[0].features.dim(0), C = samples[0].features.dim(1);
    Array x(std::vector<py::ssize_t>{static_cast<py::ssize_t>(n), static_cast<py::ssize_t>(T),
                                     static_cast<py::ssize_t>(C)});
    py::array_t<std::int64_t> y(static_cast<py::ssize_t>(n));
    double* px = x.mutable_data();
    auto py_ = y.mutable_unchecked<1>();
    for (std::size_t i = 0; i < n; ++i) {
        std::copy(samples[i].features.data().begin(), samples[i].features.data().end(), px + i * T * C);
        py_(static_cast<py::ssize_t>(i)) = static_cast<std::int64_t>(samples[i].label);
    }
    py::dict d;
    d["x"] = x;
    d["y"] = y;
    return d;
}

class PyModel {
public:
    explicit PyModel(const std::string& config_json)
        : cfg_(parse_run_config(config_json)), model_(build_model(cfg_)) {}

    static PyModel from_checkpoint(const std::string& path) {
        LoadedCheckpoint ck = load_model_checkpoint(path);
        return PyModel(std::move(ck.config), std::move(ck.model));
    }

    Array forward(const Array& x, std::vector<std::size_t> lengths) {
        const ForwardContext ctx{Mode::Eval, nullptr, false};
        return to_numpy(model_->forward(from_numpy(x), lengths, ctx));
    }

    Array features(const Array& x) {
        const ForwardContext ctx{Mode::Eval, nullptr, false};
        return to_numpy(model_->features(from_numpy(x), ctx));
    }

    py::dict state() const {
        py::dict d;
        for (const auto& [name, t] : model_->state()) d[py::str(name)] = to_numpy(t);
        return d;
    }

    std::size_t num_parameters() const { return model_->num_parameters(); }
    std::string config() const { return to_json_text(cfg_); }

private:
    PyModel(RunConfig cfg, std::unique_ptr<Model> m) : cfg_(std::move(cfg)), model_(std::move(m)) {}

    RunConfig cfg_;
    std::unique_ptr<Model> model_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Densely connected temporal convolution networks";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);
    py::register_exception<NumericalError>(m, "NumericalError", PyExc_ArithmeticError);
    py::register_exception<ShapeError>(m, "ShapeError", PyExc_ValueError);

    m.def("layer_rf", &layer_rf, "k"_a, "d"_a);
    m.def("stack_rf", &stack_rf, "r1"_a, "r2"_a);
    m.def(
        "rf_profile",
        [](const std::string& variant, std::vector<std::size_t> K, std::vector<std::size_t> D) {
            return profile_dict(
                enumerate_profile(ConnectivityGraph::from_spec(preset_block(parse_variant(variant), K, D))));
        },
        "variant"_a, "K"_a = std::vector<std::size_t>{3, 5}, "D"_a = std::vector<std::size_t>{1, 4});
    m.def(
        "empirical_profile",
        [](const std::string& variant, std::vector<std::size_t> K, std::vector<std::size_t> D) {
            return profile_dict(empirical_block_profile(preset_block(parse_variant(variant), K, D)));
        },
        "variant"_a, "K"_a = std::vector<std::size_t>{3, 5}, "D"_a = std::vector<std::size_t>{1, 4});
    m.def(
        "plan_block",
        [](const std::string& variant, std::vector<std::size_t> K, std::vector<std::size_t> D,
           std::size_t growth_rate, std::size_t reduce_channels, std::size_t in_channels) {
            BlockSpec s = preset_block(parse_variant(variant), K, D);
            s.growth_rate = growth_rate;
            s.reduce_channels = reduce_channels;
            const BlockPlan p = plan_block(s, in_channels);
            py::dict d;
            d["layer_in_channels"] = p.layer_in_channels;
            d["pre_reduce_width"] = p.pre_reduce_width;
            d["out_channels"] = p.out_channels;
            return d;
        },
        "variant"_a, "K"_a, "D"_a, "growth_rate"_a, "reduce_channels"_a, "in_channels"_a);

    m.def("default_config", [] { return to_json_text(default_run_config()); });
    m.def(
        "resolve_config", [](const std::string& text) { return to_json_text(parse_run_config(text)); }, "config_json"_a);
    m.def(
        "generate_dataset",
        [](const std::string& config_json) {
            const Dataset ds = generate(parse_run_config(config_json).data);
            py::dict d;
            d["train"] = split_dict(ds.train);
            d["val"] = split_dict(ds.val);
            d["test"] = split_dict(ds.test);
            return d;
        },
        "config_json"_a);
    m.def(
        "drop_frames",
        [](const Array& x, std::size_t n, std::uint64_t seed) {
            Rng rng(seed);
            return to_numpy(drop_frames(from_numpy(x), n, rng));
        },
        "x"_a, "n"_a, "seed"_a = 0);

    m.def(
        "train",
        [](const std::string& config_json, const std::string& out_dir) {
            const RunConfig cfg = parse_run_config(config_json);
            TrainOptions opts;
            opts.out_dir = out_dir;
            TrainedRun run;
            {
                py::gil_scoped_release release;
                run = run_experiment(cfg, opts);
            }
            py::dict d;
            d["best_val"] = run.result.best_val;
            d["best_epoch"] = run.result.best_epoch;
            d["metrics_tsv"] = run.result.metrics_tsv;
            d["test_top1"] = evaluate(*run.model, run.data.test);
            return d;
        },
        "config_json"_a, "out_dir"_a = "");
    m.def(
        "evaluate_checkpoint",
        [](const std::string& path, std::size_t drop_frames, const std::string& split) {
            LoadedCheckpoint ck = load_model_checkpoint(path);
            const Dataset data = generate(ck.config.data);
            return evaluate(*ck.model, data.split(parse_split(split)), drop_frames, ck.config.seed);
        },
        "path"_a, "drop_frames"_a = 0, "split"_a = "test");
    m.def(
        "gradcheck",
        [](std::uint64_t seed, std::size_t trials, double tol) {
            py::list out;
            for (const auto& r : run_gradcheck_suite(seed, trials, tol)) {
                py::dict d;
                d["name"] = r.name;
                d["max_rel_error"] = r.max_rel_error;
                d["skipped"] = r.skipped;
                d["passed"] = r.passed;
                out.append(d);
            }
            return out;
        },
        "seed"_a = 0, "trials"_a = 20, "tol"_a = 1e-5);

    py::class_<PyModel>(m, "Model")
        .def(py::init<const std::string&>(), "config_json"_a)
        .def_static("from_checkpoint", &PyModel::from_checkpoint, "path"_a)
        .def("forward", &PyModel::forward, "x"_a, "lengths"_a = std::vector<std::size_t>{})
        .def("features", &PyModel::features, "x"_a)
        .def("state", &PyModel::state)
        .def_property_readonly("num_parameters", &PyModel::num_parameters)
        .def_property_readonly("config", &PyModel::config);
}
