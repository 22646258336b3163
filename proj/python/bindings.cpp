#include <optional>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cfd/dataset.hpp"
#include "cfd/filters.hpp"
#include "cfd/linalg.hpp"
#include "cfd/mlp.hpp"
#include "cfd/report.hpp"
#include "cfd/scoring.hpp"
#include "cfd/search.hpp"
#include "cfd/synthetic.hpp"

namespace py = pybind11;
using namespace cfd;

namespace {

linalg::Matrix to_matrix(const std::vector<std::vector<double>>& rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r == 0 ? 0 : rows.front().size();
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw linalg::ShapeError("ragged matrix");
    data.insert(data.end(), row.begin(), row.end());
  }
  return linalg::Matrix(r, c, std::move(data));
}

std::vector<std::vector<double>> to_rows(const linalg::Matrix& m) {
  std::vector<std::vector<double>> out;
  for (std::size_t r = 0; r < m.rows(); ++r) out.emplace_back(m.row(r).begin(), m.row(r).end());
  return out;
}

mlp::Learner make_learner(const data::Dataset& d, std::vector<std::size_t> hidden, int epochs, double lr,
                          int patience, std::uint64_t seed) {
  mlp::Learner l;
  l.arch = {d.feature_dim(), std::move(hidden)};
  l.config.max_epochs = epochs;
  l.config.learning_rate = lr;
  l.config.patience = patience;
  l.config.seed = seed;
  return l;
}

}  // namespace

PYBIND11_MODULE(_cfdaudit, m) {
  m.doc() = "Counterfactual-dataset search for label-bias audits of ReLU classifiers";

  py::register_exception<data::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<data::DatasetError>(m, "DatasetError", PyExc_ValueError);
  py::register_exception<linalg::SingularMatrixError>(m, "SingularMatrixError", PyExc_ArithmeticError);

  m.def("ridge_solve",
        [](const std::vector<std::vector<double>>& X, const std::vector<double>& y, double lam) {
          return linalg::ridge_solve(to_matrix(X), y, lam);
        },
        py::arg("X"), py::arg("y"), py::arg("lam") = 1e-2);
  m.def("influence_weights",
        [](const std::vector<std::vector<double>>& X, const std::vector<double>& x, double lam) {
          return linalg::influence_weights(to_matrix(X), x, lam);
        },
        py::arg("X"), py::arg("x"), py::arg("lam") = 1e-2);

  py::class_<data::Dataset>(m, "Dataset")
      .def_static(
          "from_csv",
          [](const std::string& csv, const std::string& schema_json) {
            const auto schema = data::Schema::from_json_text(schema_json);
            return data::prepare(data::parse_csv(csv, schema), schema);
          },
          py::arg("csv"), py::arg("schema_json"))
      .def_static(
          "load",
          [](const std::filesystem::path& data_path, const std::filesystem::path& schema_path) {
            const auto schema = data::Schema::load(schema_path);
            return data::prepare(data::load_csv(data_path, schema), schema);
          },
          py::arg("data"), py::arg("schema"))
      .def_property_readonly("X", [](const data::Dataset& d) { return to_rows(d.X); })
      .def_property_readonly("y", [](const data::Dataset& d) { return d.y; })
      .def_property_readonly("feature_dim", &data::Dataset::feature_dim)
      .def("__len__", &data::Dataset::size)
      .def("train_indices", &data::Dataset::train_indices)
      .def("val_indices", &data::Dataset::val_indices)
      .def("test_indices", &data::Dataset::test_indices)
      .def("digest", &data::Dataset::digest)
      .def("flip_labels", [](const data::Dataset& d, const std::vector<std::size_t>& idx) {
        return data::flip_labels(d, idx);
      });

  m.def(
      "synthetic_dataset",
      [](std::size_t rows, std::size_t numeric, std::uint64_t seed) {
        synthetic::FixtureConfig cfg;
        cfg.rows = rows;
        cfg.numeric = numeric;
        cfg.seed = seed;
        return synthetic::make_dataset(cfg);
      },
      py::arg("rows") = 50, py::arg("numeric") = 4, py::arg("seed") = 0);

  py::class_<mlp::MlpModel>(m, "Model")
      .def("logit", [](const mlp::MlpModel& mo, const std::vector<double>& x) { return mlp::logit(mo, x); })
      .def("predict", [](const mlp::MlpModel& mo, const std::vector<double>& x) { return mlp::predict(mo, x); })
      .def("activation_pattern",
           [](const mlp::MlpModel& mo, const std::vector<double>& x) {
             return mlp::activation_pattern(mo, x).layers;
           })
      .def("linearize", [](const mlp::MlpModel& mo, const std::vector<double>& x) { return mlp::linearize(mo, x); })
      .def_property_readonly("hidden", [](const mlp::MlpModel& mo) { return mo.arch.hidden; })
      .def_property_readonly("epochs_run", [](const mlp::MlpModel& mo) { return mo.meta.epochs_run; })
      .def("to_json", [](const mlp::MlpModel& mo) { return mlp::to_json_text(mo); });

  m.def("init_model",
        [](std::size_t input_dim, std::vector<std::size_t> hidden, std::uint64_t seed) {
          return mlp::init_model({input_dim, std::move(hidden)}, seed);
        },
        py::arg("input_dim"), py::arg("hidden"), py::arg("seed") = 0);
  m.def("train",
        [](const data::Dataset& d, std::vector<std::size_t> hidden, int epochs, double lr, int patience,
           std::uint64_t seed) { return make_learner(d, std::move(hidden), epochs, lr, patience, seed).fit(d); },
        py::arg("dataset"), py::arg("hidden"), py::arg("epochs") = 100, py::arg("lr") = 0.005,
        py::arg("patience") = 10, py::arg("seed") = 0);

  m.def(
      "similarity",
      [](const std::vector<std::vector<std::uint8_t>>& a, const std::vector<std::vector<std::uint8_t>>& b,
         bool decay) { return scoring::similarity({a}, {b}, decay); },
      py::arg("a"), py::arg("b"), py::arg("decay") = true);
  m.def(
      "lr_scores",
      [](const data::Dataset& d, const std::vector<double>& x, double lam) { return scoring::lr_scores(d, x, lam); },
      py::arg("dataset"), py::arg("x"), py::arg("lam") = 1e-2);
  m.def(
      "combine",
      [](const std::vector<double>& z, const std::vector<double>& sim, const std::vector<std::uint8_t>& psi) {
        return scoring::combine(z, sim, psi).order;
      },
      py::arg("z"), py::arg("sim"), py::arg("psi"));

  m.def(
      "run_audit",
      [](const data::Dataset& d, std::vector<std::size_t> hidden, const std::string& mode,
         const std::string& score, std::size_t budget_m, std::optional<std::size_t> t, std::uint64_t seed,
         const std::string& phi, const std::string& psi, std::optional<std::vector<std::size_t>> tests,
         std::size_t jobs, int epochs) {
        const auto learner = make_learner(d, std::move(hidden), epochs, 0.005, 10, seed);
        data::FilterConfig filter{data::parse_phi_mode(phi), data::parse_psi_mode(psi), std::nullopt};
        search::SearchConfig cfg;
        cfg.m = budget_m;
        cfg.t_budget = t;
        cfg.mode = search::parse_search_mode(mode);
        cfg.score_mode = scoring::parse_score_mode(score);
        cfg.seed = seed;
        const auto idx = tests ? *tests : d.test_indices();
        search::AuditOutcome out;
        {
          py::gil_scoped_release release;
          out = search::run_audit(d, learner, filter, cfg, idx, jobs);
        }
        std::vector<std::string> results;
        for (const auto& r : out.results) results.push_back(report::result_to_json(r).dump());
        return results;
      },
      py::arg("dataset"), py::arg("hidden"), py::arg("mode") = "small", py::arg("score") = "combined",
      py::arg("m") = 0, py::arg("t") = std::nullopt, py::arg("seed") = 0, py::arg("phi") = "always",
      py::arg("psi") = "same_group_and_prediction", py::arg("tests") = std::nullopt, py::arg("jobs") = 1,
      py::arg("epochs") = 100,
      "Runs the audit and returns one JSON string per test input.");

  m.def(
      "exhaustive_oracle",
      [](const data::Dataset& d, std::vector<std::size_t> hidden, std::size_t test_index, std::size_t budget_m,
         std::uint64_t seed, const std::string& psi, std::uint64_t cap, int epochs) {
        if (test_index >= d.size()) throw py::index_error("test_index out of range");
        const auto learner = make_learner(d, std::move(hidden), epochs, 0.005, 10, seed);
        const auto model = learner.fit(d);
        const auto x = d.X.row(test_index);
        data::FilterConfig filter{data::PhiMode::always, data::parse_psi_mode(psi), std::nullopt};
        const auto rows = data::psi_mask(filter, d, x, model).rows(d.train_indices());
        const auto res = search::exhaustive_oracle(d, learner, budget_m, x, rows, mlp::predict(model, x), cap);
        return py::dict(py::arg("exists") = res.exists, py::arg("flipped") = res.flipped,
                        py::arg("retrains") = res.retrains);
      },
      py::arg("dataset"), py::arg("hidden"), py::arg("test_index"), py::arg("m") = 1, py::arg("seed") = 0,
      py::arg("psi") = "same_group_and_prediction", py::arg("cap") = 5000, py::arg("epochs") = 100);
}
