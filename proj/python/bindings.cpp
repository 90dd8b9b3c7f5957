#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdio>
#include <string>
#include <vector>

#include "t2s/config.hpp"
#include "t2s/errors.hpp"
#include "t2s/gradcheck.hpp"
#include "t2s/metrics.hpp"
#include "t2s/ops.hpp"
#include "t2s/pattention.hpp"
#include "t2s/policy.hpp"
#include "t2s/report.hpp"
#include "t2s/tasksuite.hpp"
#include "t2s/tokenpool.hpp"
#include "t2s/trainer.hpp"

namespace py = pybind11;
using namespace t2s;

namespace {

Tensor matrix_tensor(const std::vector<std::vector<double>>& rows, const char* name) {
    if (rows.empty()) throw ContractError(std::string(name) + " must be non-empty");
    const std::int64_t cols = static_cast<std::int64_t>(rows[0].size());
    std::vector<double> flat;
    for (const auto& r : rows) {
        if (static_cast<std::int64_t>(r.size()) != cols) {
            throw ContractError(std::string(name) + " rows must have equal length");
        }
        flat.insert(flat.end(), r.begin(), r.end());
    }
    return Tensor::from_data(std::move(flat), {static_cast<std::int64_t>(rows.size()), cols});
}

std::vector<std::vector<double>> matrix_rows(const Tensor& t) {
    const auto& shape = t.shape();
    if (shape.size() != 2) throw ContractError("expected a rank-2 result");
    std::vector<std::vector<double>> out(static_cast<std::size_t>(shape[0]));
    const std::vector<double> flat = t.vec();
    for (std::int64_t i = 0; i < shape[0]; ++i) {
        out[static_cast<std::size_t>(i)].assign(
            flat.begin() + static_cast<std::ptrdiff_t>(i * shape[1]),
            flat.begin() + static_cast<std::ptrdiff_t>((i + 1) * shape[1]));
    }
    return out;
}

SuccessMatrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
    SuccessMatrix m(static_cast<int>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].size() != i + 1) {
            throw ContractError("row " + std::to_string(i) + " must hold " + std::to_string(i + 1) +
                                " entries (lower triangle)");
        }
        for (std::size_t q = 0; q < rows[i].size(); ++q) {
            m.set(static_cast<int>(i), static_cast<int>(q), rows[i][q]);
        }
    }
    return m;
}

std::string config_value_to_string(const py::handle& value) {
    if (py::isinstance<py::bool_>(value)) return value.cast<bool>() ? "1" : "0";
    if (py::isinstance<py::float_>(value)) {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.17g", value.cast<double>());
        return buf;
    }
    return py::str(value).cast<std::string>();
}

LifelongRunConfig config_from_dict(const py::dict& overrides) {
    LifelongRunConfig cfg = default_run_config();
    for (const auto& item : overrides) {
        apply_config_kv(cfg, py::str(item.first).cast<std::string>(),
                        config_value_to_string(item.second));
    }
    return cfg;
}

py::dict report_to_dict(const TaskReport& r) {
    py::dict d;
    d["position"] = r.position;
    d["task_id"] = r.task_id;
    d["instruction"] = r.instruction;
    d["selected_rows"] = r.selected_rows;
    d["shared_rows"] = r.shared_rows;
    d["trainable_rows"] = r.trainable_rows;
    d["used_rows_after"] = r.used_rows_after;
    d["fwt_one_epoch"] = r.fwt_one_epoch;
    d["first_loss"] = r.first_loss;
    d["final_loss"] = r.final_loss;
    return d;
}

py::dict run_lifelong_py(const py::dict& overrides) {
    const LifelongRunConfig cfg = config_from_dict(overrides);
    LifelongResult res = run_lifelong(cfg);
    py::dict out;
    py::list rows;
    for (int i = 0; i < res.matrix.size(); ++i) {
        py::list row;
        for (int q = 0; q <= i; ++q) row.append(res.matrix.at(i, q));
        rows.append(row);
    }
    out["matrix"] = rows;
    out["fwt"] = res.fwt;
    out["auc"] = res.auc;
    out["nbt"] = res.nbt_defined ? py::object(py::float_(res.nbt)) : py::object(py::none());
    out["nbt_m"] = res.nbt_m;
    out["auc_m"] = res.auc_m;
    out["used_rows_total"] = res.used_rows_total;
    out["pool_rows_per_layer"] = res.pool_rows_per_layer;
    out["config_hash"] = hex16(res.config_hash);
    py::list reports;
    for (const TaskReport& r : res.reports) reports.append(report_to_dict(r));
    out["ledger"] = reports;
    return out;
}

Policy embed_probe(std::int64_t width, std::uint64_t seed) {
    PolicyConfig pc;
    pc.blocks = 1;
    pc.width = width;
    pc.j = 1;
    pc.window = 1;
    pc.capacity = 1;
    pc.token_mixing = false;
    pc.seed = seed;
    return Policy(pc);
}

}  // namespace

PYBIND11_MODULE(t2s_core, m) {
    m.doc() = "tokenized skill scaling: lifelong imitation learning with a growable token pool";
    m.attr("__version__") = "1.0.0";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);

    m.def(
        "pattention",
        [](const std::vector<std::vector<double>>& x, const std::vector<std::vector<double>>& keys,
           const std::vector<std::vector<double>>& values) {
            NoGradGuard guard;
            return matrix_rows(pattention_forward(matrix_tensor(x, "x"),
                                                  matrix_tensor(keys, "keys"),
                                                  matrix_tensor(values, "values")));
        },
        py::arg("x"), py::arg("keys"), py::arg("values"),
        "token-parameter attention: softmax(x . keys^T) . values");

    m.def(
        "softmax_rows",
        [](const std::vector<std::vector<double>>& x) {
            NoGradGuard guard;
            return matrix_rows(ops::softmax_rows(matrix_tensor(x, "x")));
        },
        py::arg("x"));

    m.def(
        "embed_instruction",
        [](const std::string& text, std::int64_t width, std::uint64_t seed) {
            return embed_probe(width, seed).embed_instruction(text);
        },
        py::arg("text"), py::arg("width") = 48, py::arg("seed") = 7,
        "deterministic bag-of-words embedding used for token selection");

    m.def(
        "select_tokens",
        [](const std::vector<double>& e, const std::vector<std::vector<double>>& keys,
           std::int64_t j) {
            NoGradGuard guard;
            return select_tokens(e, matrix_tensor(keys, "keys"), j);
        },
        py::arg("e"), py::arg("keys"), py::arg("j"),
        "indices of the j keys most cosine-similar to e, sorted ascending");

    m.def(
        "fwt", [](const std::vector<std::vector<double>>& rows) { return fwt(matrix_from_rows(rows)); },
        py::arg("matrix"));
    m.def(
        "nbt",
        [](const std::vector<std::vector<double>>& rows, const std::string& convention) {
            return nbt(matrix_from_rows(rows), nbt_convention_from_string(convention));
        },
        py::arg("matrix"), py::arg("convention") = "exclude-final");
    m.def(
        "auc", [](const std::vector<std::vector<double>>& rows) { return auc(matrix_from_rows(rows)); },
        py::arg("matrix"));

    m.def(
        "run_gradcheck",
        [](std::uint64_t seed) {
            py::list out;
            for (const GradCheckEntry& e : run_gradcheck(seed)) {
                py::dict d;
                d["component"] = e.component;
                d["max_rel_err"] = e.max_rel_err;
                d["tolerance"] = e.tolerance;
                d["pass"] = e.pass;
                out.append(d);
            }
            return out;
        },
        py::arg("seed") = 1);

    m.def(
        "suite_instructions",
        [](int k, std::uint64_t seed) {
            SuiteParams params;
            params.K = k;
            params.seed = seed;
            std::vector<std::string> out;
            for (const Task& t : make_suite(params)) out.push_back(t.instruction);
            return out;
        },
        py::arg("k") = 10, py::arg("seed") = 7);

    m.def("default_config",
          [] { return canonical_config_text(default_run_config()); });
    m.def(
        "canonical_config",
        [](const py::dict& overrides) { return canonical_config_text(config_from_dict(overrides)); },
        py::arg("overrides"));
    m.def(
        "config_hash",
        [](const py::dict& overrides) { return hex16(config_hash(config_from_dict(overrides))); },
        py::arg("overrides"));

    m.def("run_lifelong", &run_lifelong_py, py::arg("overrides"),
          "full lifelong training run; overrides layer on the default config");
}
