#include "bckl/error.hpp"
#include "bckl/io.hpp"
#include "bckl/kernels.hpp"
#include "bckl/mcmc.hpp"
#include "bckl/metrics.hpp"

#include <json.hpp>
#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <limits>

namespace py = pybind11;
using namespace bckl;

namespace {

using FArray = py::array_t<double, py::array::f_style | py::array::forcecast>;

// (M, T, P) arrays map onto the vectorized layout directly in Fortran order.
Dims dims_of(const FArray& a) {
    if (a.ndim() != 3) throw DimensionError("expected a 3-D array of shape (M, T, P)");
    return Dims{a.shape(0), a.shape(1), a.shape(2)};
}

Eigen::VectorXd flat(const FArray& a) {
    return Eigen::Map<const Eigen::VectorXd>(a.data(), static_cast<Index>(a.size()));
}

FArray to_array(const Dims& d, const Eigen::VectorXd& v) {
    FArray out({d.m, d.t, d.p});
    std::copy(v.data(), v.data() + v.size(), out.mutable_data());
    return out;
}

py::array_t<bool> mask_array(const Dims& d, const std::vector<std::uint8_t>& m) {
    py::array_t<bool, py::array::f_style> out({d.m, d.t, d.p});
    bool* p = out.mutable_data();
    for (std::size_t i = 0; i < m.size(); ++i) p[i] = m[i] != 0;
    return out;
}

std::vector<std::uint8_t> mask_vector(const py::array_t<bool, py::array::f_style | py::array::forcecast>& a) {
    std::vector<std::uint8_t> m(static_cast<std::size_t>(a.size()));
    for (std::size_t i = 0; i < m.size(); ++i) m[i] = a.data()[i] ? 1 : 0;
    return m;
}

py::dict score_dict(const ScoreReport& r) {
    py::dict d;
    d["mae"] = r.mae;
    d["rmse"] = r.rmse;
    d["crps"] = r.crps;
    d["int"] = r.int_score;
    d["cvg"] = r.cvg;
    d["psnr"] = r.psnr;
    d["n"] = r.n;
    return d;
}

py::dict fit(const FArray& data, const std::string& config_json, std::optional<Eigen::MatrixXd> space_precomputed,
             std::optional<Eigen::MatrixXd> time_precomputed, std::optional<py::function> progress) {
    const Dims d = dims_of(data);
    nlohmann::json doc = nlohmann::json::parse(config_json.empty() ? "{}" : config_json);
    if (doc.contains("input") || doc.contains("output_dir") || doc.contains("precomputed")) {
        throw SchemaError("'input', 'output_dir' and 'precomputed' are file settings; pass arrays instead");
    }
    doc["input"] = "<array>";
    doc["output_dir"] = "";
    // Placeholder paths satisfy the "precomputed family needs a matrix" check; nothing is read.
    if (space_precomputed) doc["precomputed"]["space"] = "<array>";
    if (time_precomputed) doc["precomputed"]["time"] = "<array>";
    RunConfig rc = parse_run_config(doc.dump());
    rc.mcmc.space_precomputed = std::move(space_precomputed);
    rc.mcmc.time_precomputed = std::move(time_precomputed);
    const SpatioTensor t = SpatioTensor::from_nan_pattern(d, flat(data));

    McmcObserver obs;
    if (progress) {
        obs.on_sweep = [&](const SweepRecord& r) {
            py::gil_scoped_acquire gil;
            (*progress)(r.iteration, r.tau);
        };
    }
    McmcResult res;
    {
        py::gil_scoped_release release;
        res = run_mcmc(t, rc.mcmc, progress ? &obs : nullptr);
    }
    const PosteriorSummary s = summarize(res.samples, rc.mcmc.level);

    const auto n = static_cast<Index>(res.trace.size());
    Eigen::VectorXd tau(n), pcg(n);
    Eigen::MatrixXd phi(n, rc.mcmc.rank), delta(n, rc.mcmc.rank);
    Eigen::MatrixXd theta1(n, rc.mcmc.local_components), theta2(n, rc.mcmc.local_components);
    for (Index k = 0; k < n; ++k) {
        const SweepRecord& r = res.trace[static_cast<std::size_t>(k)];
        tau[k] = r.tau;
        pcg[k] = r.pcg_iterations;
        if (rc.mcmc.rank > 0) {
            phi.row(k) = r.log_phi.array().exp().matrix().transpose();
            delta.row(k) = r.log_delta.array().exp().matrix().transpose();
        }
        if (rc.mcmc.local_components > 0) {
            theta1.row(k) = r.log_theta1.array().exp().matrix().transpose();
            theta2.row(k) = r.log_theta2.array().exp().matrix().transpose();
        }
    }
    py::dict trace;
    trace["tau"] = tau;
    trace["phi"] = phi;
    trace["delta"] = delta;
    trace["theta1"] = theta1;
    trace["theta2"] = theta2;
    trace["pcg_iterations"] = pcg;

    py::dict out;
    out["mean"] = to_array(d, s.mean);
    out["std"] = to_array(d, s.std);
    out["lower"] = to_array(d, s.lower);
    out["upper"] = to_array(d, s.upper);
    out["level"] = s.level;
    out["trace"] = trace;
    out["solver_failures"] = res.solver_failures;
    out["exact_quantiles"] = res.samples.exact();
    return out;
}

}  // namespace

PYBIND11_MODULE(_bckl, m) {
    m.doc() = "Bayesian complementary kernelized tensor completion";
    m.attr("__version__") = BCKL_VERSION;

    // Error hierarchy mirrors the C++ one. Translators run newest first, so bases go first.
    auto base = py::register_exception<Error>(m, "BcklError");
    py::register_exception<DimensionError>(m, "DimensionError", base);
    py::register_exception<ParameterError>(m, "ParameterError", base);
    py::register_exception<FactorizationError>(m, "FactorizationError", base);
    py::register_exception<ConfigError>(m, "ConfigError", base);
    auto data = py::register_exception<DataError>(m, "DataError", base);
    py::register_exception<SchemaError>(m, "SchemaError", data);
    py::register_exception<SolverError>(m, "SolverError", base);

    m.def("fit", &fit, py::arg("data"), py::arg("config_json") = "", py::arg("space_precomputed") = py::none(),
          py::arg("time_precomputed") = py::none(), py::arg("progress") = py::none(),
          "Run the sampler on an (M, T, P) array with NaN for missing entries.");

    m.def(
        "generate_synthetic",
        [](Index n1, Index n2, double noise_var, std::uint64_t seed) {
            const SpatioTensor t = generate_synthetic(n1, n2, noise_var, seed);
            return to_array(t.dims(), t.values());
        },
        py::arg("n1") = 100, py::arg("n2") = 100, py::arg("noise_var") = 0.01, py::arg("seed") = 0);
    m.def("synthetic_field", &synthetic_field, py::arg("s1"), py::arg("s2"));

    m.def(
        "apply_missing",
        [](const FArray& values, const std::string& scenario, double rate, std::uint64_t seed) {
            const Dims d = dims_of(values);
            const SpatioTensor t = SpatioTensor::from_nan_pattern(d, flat(values));
            const MissingResult r = apply_missing(t, {parse_missing_kind(scenario), rate}, seed);
            return py::make_tuple(to_array(d, r.train.values()), mask_array(d, r.test_mask), r.achieved_rate);
        },
        py::arg("values"), py::arg("scenario"), py::arg("rate") = 0.5, py::arg("seed") = 0,
        "Returns (train with NaN holes, held-out mask, achieved rate).");

    m.def(
        "score",
        [](const FArray& truth, const FArray& mean, const FArray& std, const FArray& lower, const FArray& upper,
           const py::array_t<bool, py::array::f_style | py::array::forcecast>& test_mask, double alpha,
           std::optional<double> psnr_max) {
            const Dims d = dims_of(truth);
            PosteriorSummary s;
            s.mean = flat(mean);
            s.std = flat(std);
            s.lower = flat(lower);
            s.upper = flat(upper);
            if (s.mean.size() != d.size() || s.std.size() != d.size() || s.lower.size() != d.size() ||
                s.upper.size() != d.size() || test_mask.size() != d.size()) {
                throw DimensionError("all arrays must have the shape of the truth");
            }
            return score_dict(evaluate(s, SpatioTensor::from_nan_pattern(d, flat(truth)), mask_vector(test_mask), alpha,
                                       psnr_max));
        },
        py::arg("truth"), py::arg("mean"), py::arg("std"), py::arg("lower"), py::arg("upper"), py::arg("test_mask"),
        py::arg("alpha") = 0.05, py::arg("psnr_max") = py::none());

    m.def(
        "crps_gaussian", [](double y, double mean, double sd) { return crps_gaussian(y, mean, sd); }, py::arg("y"),
        py::arg("mean"), py::arg("std"));
    m.def(
        "kernel",
        [](const std::string& family, double h, double lengthscale, double variance) {
            return kernel_eval({parse_kernel_family(family), lengthscale, variance}, h);
        },
        py::arg("family"), py::arg("h"), py::arg("lengthscale") = 1.0, py::arg("variance") = 1.0);
    m.def(
        "taper",
        [](const std::string& family, double delta, double range) {
            return taper_eval({parse_taper_family(family), range}, delta);
        },
        py::arg("family"), py::arg("delta"), py::arg("range"));

    m.def(
        "read_tensor",
        [](const std::string& path) {
            Dims d;
            const Eigen::VectorXd v = read_tensor_values(path, &d);
            return to_array(d, v);
        },
        py::arg("path"));
    m.def(
        "write_tensor",
        [](const std::string& path, const FArray& values) {
            const Dims d = dims_of(values);
            write_tensor(path, SpatioTensor::from_nan_pattern(d, flat(values)));
        },
        py::arg("path"), py::arg("values"));
}
