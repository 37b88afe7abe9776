#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tiered/desk.hpp"
#include "tiered/error.hpp"
#include "tiered/hitrate.hpp"
#include "tiered/io.hpp"
#include "tiered/simulator.hpp"
#include "tiered/vecstore.hpp"

namespace py = pybind11;
using namespace tiered;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

VectorDataset to_dataset(const FloatArray& a, VectorId first_id) {
    TIERED_CHECK(a.ndim() == 2, ErrorKind::InvalidArgument, "expected a 2-D array");
    VectorDataset d;
    d.dim = std::size_t(a.shape(1));
    d.data.assign(a.data(), a.data() + a.size());
    d.ids.resize(std::size_t(a.shape(0)));
    for (std::size_t i = 0; i < d.ids.size(); ++i) {
        d.ids[i] = first_id + i;
    }
    return d;
}

Scenario parse_scenario(const std::string& text) {
    try {
        return Json::parse(text).get<Scenario>();
    } catch (const nlohmann::json::exception& e) {
        throw_error(ErrorKind::Format, e.what());
    }
}

} // namespace

PYBIND11_MODULE(_tieredrag, m) {
    m.doc() = "Tiered vector search: hit-rate model, IVF index, planner and simulator";

    static py::exception<Error> error(m, "Error", PyExc_RuntimeError);
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) {
                std::rethrow_exception(p);
            }
        } catch (const Error& e) {
            PyErr_SetString(error.ptr(), (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
        }
    });

    py::class_<BetaParams>(m, "BetaParams")
            .def(py::init([](double a, double b) { return BetaParams{a, b}; }), py::arg("alpha"), py::arg("beta"))
            .def_readwrite("alpha", &BetaParams::alpha)
            .def_readwrite("beta", &BetaParams::beta)
            .def("mean", &BetaParams::mean)
            .def("variance", &BetaParams::variance)
            .def("__repr__", [](const BetaParams& p) {
                return "BetaParams(alpha=" + std::to_string(p.alpha) + ", beta=" + std::to_string(p.beta) + ")";
            });

    m.def("variance_at", &variance_at, py::arg("mean"), py::arg("sigma2_max"));
    m.def("beta_from_moments", &beta_from_moments, py::arg("mean"), py::arg("variance"));
    m.def(
            "expected_min_hitrate",
            [](double alpha, double beta, std::size_t B) { return expected_min_hitrate({alpha, beta}, B).eta_min; },
            py::arg("alpha"),
            py::arg("beta"),
            py::arg("batch"));
    m.def("batch_min_hitrate", &batch_min_hitrate, py::arg("mean"), py::arg("sigma2_max"), py::arg("batch"));
    m.def(
            "mc_min_hitrate",
            [](double alpha, double beta, std::size_t B, std::size_t n, std::uint64_t seed) {
                const auto e = mc_min_hitrate_oracle({alpha, beta}, B, n, seed);
                return py::make_tuple(e.mean, e.std_error);
            },
            py::arg("alpha"),
            py::arg("beta"),
            py::arg("batch"),
            py::arg("n_samples") = 100000,
            py::arg("seed") = 1);

    py::class_<IvfIndex>(m, "IvfIndex")
            .def_property_readonly("dim", &IvfIndex::dim)
            .def_property_readonly("n_clusters", &IvfIndex::n_clusters)
            .def_property_readonly("total_size", &IvfIndex::total_size)
            .def(
                    "search",
                    [](const IvfIndex& index, const FloatArray& queries, std::size_t nprobe, std::size_t k) {
                        const auto qs = to_dataset(queries, 0);
                        std::vector<TopK> res;
                        {
                            py::gil_scoped_release release;
                            res = search(index, qs, nprobe, k);
                        }
                        py::array_t<std::int64_t> ids({res.size(), k});
                        py::array_t<float> dist({res.size(), k});
                        auto iv = ids.mutable_unchecked<2>();
                        auto dv = dist.mutable_unchecked<2>();
                        for (std::size_t q = 0; q < res.size(); ++q) {
                            for (std::size_t j = 0; j < k; ++j) {
                                const bool have = j < res[q].hits.size();
                                iv(q, j) = have ? std::int64_t(res[q].hits[j].id) : -1;
                                dv(q, j) = have ? res[q].hits[j].distance : std::numeric_limits<float>::infinity();
                            }
                        }
                        return py::make_tuple(ids, dist);
                    },
                    py::arg("queries"),
                    py::arg("nprobe"),
                    py::arg("k"),
                    "Returns (ids, distances); missing slots are -1 / inf.")
            .def("save", [](const IvfIndex& index, const std::string& path) { save_index(index, path); })
            .def_static("load", [](const std::string& path) { return load_index(path); });

    m.def(
            "train_ivf",
            [](const FloatArray& data, std::size_t n_clusters, std::uint64_t seed, const std::string& quantization) {
                TIERED_CHECK(
                        quantization == "none" || quantization == "sq8",
                        ErrorKind::InvalidArgument,
                        "quantization must be none or sq8");
                const auto d = to_dataset(data, 0);
                py::gil_scoped_release release;
                return train_ivf(
                        d, n_clusters, quantization == "sq8" ? Quantization::Scalar8 : Quantization::None, seed);
            },
            py::arg("data"),
            py::arg("n_clusters"),
            py::arg("seed") = 1,
            py::arg("quantization") = "none",
            "Vector ids are row numbers.");

    m.def(
            "desk_scenario_json",
            [](double slo_search_ms) {
                DeskConfig cfg;
                if (slo_search_ms > 0) {
                    cfg.slo.slo_search_ms = slo_search_ms;
                }
                Desk d;
                {
                    py::gil_scoped_release release;
                    d = build_desk(cfg);
                }
                Json j{{"plan", d.plan},
                       {"scenario", d.scenario},
                       {"sigma2_max", d.sigma.sigma2_max},
                       {"expected_hitrate", d.scenario.hits.mean}};
                return j.dump();
            },
            py::arg("slo_search_ms"));

    m.def(
            "simulate_json",
            [](const std::string& scenario) {
                const auto sc = parse_scenario(scenario);
                SimMetrics r;
                {
                    py::gil_scoped_release release;
                    r = simulate(sc);
                }
                Json j = summarize(r);
                j["feasible"] = r.feasible;
                j["mu_llm_rps"] = r.mu_llm_rps;
                j["p90_search_ms"] = r.p90_search_ms;
                j["mean_search_ms"] = r.mean_search_ms;
                j["n_requests"] = r.requests.size();
                return j.dump();
            },
            py::arg("scenario"));

    m.def(
            "max_compliant_lambda_json",
            [](const std::string& scenario, double target) {
                const auto sc = parse_scenario(scenario);
                py::gil_scoped_release release;
                return max_compliant_lambda(sc, target).lambda_rps;
            },
            py::arg("scenario"),
            py::arg("target") = 0.9);
}
