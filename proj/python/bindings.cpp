#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "csdetect/config.hpp"
#include "csdetect/decoder.hpp"
#include "csdetect/encoder.hpp"
#include "csdetect/evaluation.hpp"
#include "csdetect/pipeline.hpp"
#include "csdetect/predictor.hpp"
#include "csdetect/recovery.hpp"
#include "csdetect/sensing.hpp"
#include "csdetect/synthdata.hpp"

namespace py = pybind11;
using namespace csdetect;

namespace {

using PointRows = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;
using DetectionRows = Eigen::Matrix<double, Eigen::Dynamic, 3, Eigen::RowMajor>;

std::vector<Point2> to_points(const Eigen::Ref<const Eigen::MatrixXd>& xy) {
    if (xy.size() != 0 && xy.cols() < 2) throw std::invalid_argument("points must be an (n, 2) array");
    std::vector<Point2> out;
    out.reserve(static_cast<std::size_t>(xy.rows()));
    for (Eigen::Index i = 0; i < xy.rows(); ++i) out.push_back({xy(i, 0), xy(i, 1)});
    return out;
}

PointRows from_points(const std::vector<Point2>& pts) {
    PointRows out(static_cast<Eigen::Index>(pts.size()), 2);
    for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) << pts[i].x, pts[i].y;
    return out;
}

DetectionRows from_detections(const DetectionResult& d) {
    DetectionRows out(static_cast<Eigen::Index>(d.size()), 3);
    for (std::size_t i = 0; i < d.size(); ++i) {
        const auto& p = d.points[i];
        out.row(static_cast<Eigen::Index>(i)) << p.x, p.y, static_cast<double>(p.support);
    }
    return out;
}

DetectionResult to_detections(const Eigen::Ref<const Eigen::MatrixXd>& rows) {
    DetectionResult out;
    for (Eigen::Index i = 0; i < rows.rows(); ++i) {
        out.points.push_back({rows(i, 0), rows(i, 1), rows.cols() > 2 ? static_cast<int>(rows(i, 2)) : 1});
    }
    return out;
}

AnnotationSet annotations(const Eigen::Ref<const Eigen::MatrixXd>& xy, int width, int height) {
    return AnnotationSet(ImageGrid(width, height), to_points(xy));
}

RecoveryParams recovery_params(double noise_budget, bool relative_budget, std::size_t max_sparsity) {
    RecoveryParams p;
    p.noise_budget = noise_budget;
    p.relative_budget = relative_budget;
    p.max_sparsity = max_sparsity;
    p.validate();
    return p;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Cell detection by compressed sensing of annotation maps";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<InfeasibleParams>(m, "InfeasibleParams", PyExc_ValueError);

    py::class_<SensingMatrix>(m, "SensingMatrix")
        .def_property_readonly("rows", &SensingMatrix::rows)
        .def_property_readonly("cols", &SensingMatrix::cols)
        .def_property_readonly("seed", &SensingMatrix::seed)
        .def_property_readonly("matrix", &SensingMatrix::matrix, py::return_value_policy::copy)
        .def("apply", &SensingMatrix::apply, py::arg("f"));
    m.def("make_sensing_matrix", &make_sensing_matrix, py::arg("rows"), py::arg("cols"), py::arg("seed"));
    m.def("minimum_rows", &minimum_rows, py::arg("sparsity"), py::arg("n"),
          py::arg("c_m") = kDefaultMeasurementConstant);
    m.def(
        "empirical_rip_check",
        [](const SensingMatrix& phi, std::size_t k, std::size_t trials, std::uint64_t seed, double bound) {
            const auto r = empirical_rip_check(phi, k, trials, seed, bound);
            py::dict d;
            d["delta_observed"] = r.delta_observed;
            d["min_ratio"] = r.min_ratio;
            d["max_ratio"] = r.max_ratio;
            d["trials"] = r.trials;
            d["sparsity_tested"] = r.sparsity_tested;
            d["violation_count"] = r.violation_count;
            d["delta_bound"] = r.delta_bound;
            return d;
        },
        py::arg("phi"), py::arg("k"), py::arg("trials"), py::arg("seed"), py::arg("delta_bound") = 0.6);

    m.def(
        "encode_scheme1",
        [](const Eigen::Ref<const Eigen::MatrixXd>& cells, int width, int height, const SensingMatrix& phi) {
            return encode_scheme1(annotations(cells, width, height), phi).values();
        },
        py::arg("cells"), py::arg("width"), py::arg("height"), py::arg("phi"));

    py::class_<AxisLayout>(m, "AxisLayout")
        .def_property_readonly("size", &AxisLayout::size)
        .def_property_readonly("bin_count", &AxisLayout::bin_count)
        .def_property_readonly("margin", &AxisLayout::margin)
        .def_property_readonly("origins",
                               [](const AxisLayout& l) {
                                   std::vector<Point2> pts;
                                   for (const auto& a : l.axes()) pts.push_back(a.origin());
                                   return from_points(pts);
                               })
        .def_property_readonly("directions",
                               [](const AxisLayout& l) {
                                   std::vector<Point2> pts;
                                   for (const auto& a : l.axes()) pts.push_back(a.direction());
                                   return from_points(pts);
                               })
        .def("to_text", &AxisLayout::to_text);
    m.def(
        "build_axis_layout",
        [](int width, int height, int axes, double margin) {
            const ImageGrid grid(width, height);
            return build_axis_layout(grid, axes, margin > 0.0 ? margin : default_axis_margin(grid));
        },
        py::arg("width"), py::arg("height"), py::arg("axes"), py::arg("margin") = 0.0);
    m.def(
        "encode_scheme2",
        [](const Eigen::Ref<const Eigen::MatrixXd>& cells, const AxisLayout& layout, const SensingMatrix& phi) {
            return encode_scheme2(annotations(cells, layout.grid().width(), layout.grid().height()), layout, phi)
                .values();
        },
        py::arg("cells"), py::arg("layout"), py::arg("phi"));

    m.def(
        "omp_recover",
        [](const Eigen::VectorXd& y, const SensingMatrix& phi, double noise_budget, bool relative_budget,
           std::size_t max_sparsity) {
            return omp_recover(y, phi, recovery_params(noise_budget, relative_budget, max_sparsity)).signal.to_dense();
        },
        py::arg("y"), py::arg("phi"), py::arg("noise_budget") = 0.0, py::arg("relative_budget") = false,
        py::arg("max_sparsity") = 0);
    m.def(
        "bp_recover",
        [](const Eigen::VectorXd& y, const SensingMatrix& phi, double noise_budget, bool relative_budget) {
            return bp_recover(y, phi, recovery_params(noise_budget, relative_budget, 0)).signal.to_dense();
        },
        py::arg("y"), py::arg("phi"), py::arg("noise_budget") = 0.0, py::arg("relative_budget") = false);

    m.def(
        "decode_scheme2",
        [](const Eigen::VectorXd& y_hat, const AxisLayout& layout, const SensingMatrix& phi, double noise_budget,
           bool relative_budget, int min_support, const std::string& solver) {
            DecodeParams d;
            d.min_support = min_support;
            if (solver == "omp") {
                d.solver = Solver::Omp;
            } else if (solver != "bp") {
                throw std::invalid_argument("solver must be 'bp' or 'omp'");
            }
            CompressedSignal y(y_hat, phi.rows(), layout.size());
            const auto out = decode_scheme2(y, layout, phi, d.resolved(layout),
                                            recovery_params(noise_budget, relative_budget, 0));
            return from_detections(out.detections);
        },
        py::arg("y_hat"), py::arg("layout"), py::arg("phi"), py::arg("noise_budget") = 0.0,
        py::arg("relative_budget") = false, py::arg("min_support") = 0, py::arg("solver") = "bp");

    m.def(
        "oracle_predict",
        [](const Eigen::VectorXd& y, std::size_t block_size, double sigma_rel, std::uint64_t seed) {
            const auto blocks = block_size == 0 ? 1 : static_cast<std::size_t>(y.size()) / block_size;
            return oracle_predict(CompressedSignal(y, block_size, blocks), sigma_rel, seed).values();
        },
        py::arg("y"), py::arg("block_size"), py::arg("sigma_rel"), py::arg("seed"));

    m.def(
        "generate_image",
        [](int width, int height, int count_min, int count_max, double min_separation, std::uint64_t seed) {
            SynthesisParams p;
            p.grid = ImageGrid(width, height);
            p.count_min = count_min;
            p.count_max = count_max;
            p.min_separation = min_separation;
            p.seed = seed;
            auto img = generate_image(p);
            return py::make_tuple(img.pixels, from_points(img.annotations.cells()));
        },
        py::arg("width") = 260, py::arg("height") = 260, py::arg("count_min") = 5, py::arg("count_max") = 20,
        py::arg("min_separation") = 30.0, py::arg("seed") = 0);

    m.def(
        "match_detections",
        [](const Eigen::Ref<const Eigen::MatrixXd>& predictions, const Eigen::Ref<const Eigen::MatrixXd>& truth,
           double rho) {
            const auto r = match_detections(to_points(predictions), to_points(truth), rho);
            const auto s = prf1(r);
            py::dict d;
            d["tp"] = r.tp;
            d["fp"] = r.fp;
            d["fn"] = r.fn;
            d["precision"] = s.precision;
            d["recall"] = s.recall;
            d["f1"] = s.f1;
            return d;
        },
        py::arg("predictions"), py::arg("truth"), py::arg("rho"));
    m.def(
        "prf1",
        [](std::size_t tp, std::size_t fp, std::size_t fn) {
            const auto s = prf1(tp, fp, fn);
            return py::make_tuple(s.precision, s.recall, s.f1);
        },
        py::arg("tp"), py::arg("fp"), py::arg("fn"));
    m.def(
        "merge_ensemble",
        [](const std::vector<Eigen::MatrixXd>& sets, double radius, int min_count) {
            std::vector<DetectionResult> in;
            for (const auto& s : sets) in.push_back(to_detections(s));
            return from_detections(merge_ensemble(in, radius, min_count));
        },
        py::arg("detection_sets"), py::arg("merge_radius") = 9.0, py::arg("merge_min_count") = 6);

    // Configuration travels as JSON text; the subcommands mirror the CLI.
    m.def("default_config", [] { return PipelineConfig{}.to_text(); });
    m.def(
        "check_config", [](const std::string& text) {
            const auto c = PipelineConfig::from_text(text);
            c.validate();
            return c.to_text();
        },
        py::arg("text"));
    m.def(
        "synth", [](const std::string& config, const std::filesystem::path& out) {
            return cmd_synth(PipelineConfig::from_text(config), out);
        },
        py::arg("config"), py::arg("out"), py::call_guard<py::gil_scoped_release>());
    m.def(
        "train",
        [](const std::string& config, const std::filesystem::path& manifest, const std::filesystem::path& out) {
            return cmd_train(PipelineConfig::from_text(config), manifest, out);
        },
        py::arg("config"), py::arg("manifest"), py::arg("out"), py::call_guard<py::gil_scoped_release>());
    auto run_like = [](auto fn) {
        return [fn](const std::string& config, const std::filesystem::path& manifest, const std::filesystem::path& out,
                    const std::string& mode, std::optional<std::filesystem::path> model) {
            RunOptions o;
            o.mode = mode;
            o.model = std::move(model);
            return fn(PipelineConfig::from_text(config), manifest, out, o);
        };
    };
    m.def("run", run_like(&cmd_run), py::arg("config"), py::arg("manifest"), py::arg("out"),
          py::arg("mode") = "oracle", py::arg("model") = py::none(), py::call_guard<py::gil_scoped_release>());
    m.def("ensemble", run_like(&cmd_ensemble), py::arg("config"), py::arg("manifest"), py::arg("out"),
          py::arg("mode") = "oracle", py::arg("model") = py::none(), py::call_guard<py::gil_scoped_release>());
}
