#include <sstream>

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "penetrance/cli.hpp"
#include "penetrance/likelihood.hpp"
#include "penetrance/pedigree.hpp"
#include "penetrance/penetrance_curve.hpp"
#include "penetrance/priors.hpp"
#include "penetrance/reporting.hpp"
#include "penetrance/sampler.hpp"
#include "penetrance/simulator.hpp"

namespace py = pybind11;
using namespace penetrance;

namespace {

std::vector<Pedigree> pedigrees_from_csv(const std::string& text) {
  std::istringstream in(text);
  return parse_pedigrees_csv(in);
}

ChainConfig chain_config_from_json(const std::string& text) {
  ChainConfig cfg;
  if (text.empty()) return cfg;
  const auto j = nlohmann::json::parse(text);
  cfg.n_iter_per_chain = j.value("n_iter_per_chain", cfg.n_iter_per_chain);
  cfg.n_chains = j.value("n_chains", cfg.n_chains);
  cfg.seed = j.value("seed", cfg.seed);
  cfg.var = j.value("var", cfg.var);
  cfg.burn_in = j.value("burn_in", cfg.burn_in);
  cfg.thinning_factor = j.value("thinning_factor", cfg.thinning_factor);
  cfg.age_imputation = j.value("age_imputation", cfg.age_imputation);
  cfg.imp_interval = j.value("imp_interval", cfg.imp_interval);
  cfg.remove_proband = j.value("remove_proband", cfg.remove_proband);
  cfg.sex_specific = j.value("sex_specific", cfg.sex_specific);
  cfg.median_max = j.value("median_max", cfg.median_max);
  cfg.baseline_nc = j.value("baseline_nc", cfg.baseline_nc);
  cfg.max_age = j.value("max_age", cfg.max_age);
  cfg.prev = j.value("prev", cfg.prev);
  cfg.ncores = j.value("ncores", cfg.ncores);
  return cfg;
}

WeibullPenetrance curve_from(const QuantileParams& q) {
  const auto w = quantiles_to_weibull(q);
  if (!w) throw std::invalid_argument("degenerate quartiles: need threshold < first_quartile < median");
  return *w;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Penetrance estimation core";

  m.def("quantiles_to_weibull",
        [](double asymptote, double threshold, double median, double first_quartile) -> py::object {
          const auto w = quantiles_to_weibull({asymptote, threshold, median, first_quartile});
          if (!w) return py::none();
          return py::dict(py::arg("alpha") = w->alpha, py::arg("beta") = w->beta, py::arg("gamma") = w->gamma,
                          py::arg("delta") = w->delta);
        },
        py::arg("asymptote"), py::arg("threshold"), py::arg("median"), py::arg("first_quartile"));

  m.def("cdf",
        [](double alpha, double beta, double gamma, double delta, double age) {
          return cdf({alpha, beta, gamma, delta}, age);
        },
        py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("delta"), py::arg("age"));
  m.def("annual_probability",
        [](double alpha, double beta, double gamma, double delta, int age) {
          return annual_probability({alpha, beta, gamma, delta}, age);
        },
        py::arg("alpha"), py::arg("beta"), py::arg("gamma"), py::arg("delta"), py::arg("age"));

  m.def("default_priors_json", [](int max_age) { return to_json(default_priors(max_age)).dump(); },
        py::arg("max_age") = 94);
  m.def("priors_from_json",
        [](const std::string& config, int max_age) {
          const auto baseline = example_crc_baseline(max_age);
          return to_json(priors_from_json(nlohmann::json::parse(config), max_age, &baseline)).dump();
        },
        py::arg("config"), py::arg("max_age") = 94);
  m.def("default_config_json", [] { return to_json(ChainConfig{}).dump(); });

  m.def("validate_pedigrees",
        [](const std::string& csv_text, int max_age) {
          std::vector<py::dict> out;
          for (const auto& ped : pedigrees_from_csv(csv_text)) {
            for (const auto& i : validate(ped, max_age)) {
              out.push_back(py::dict(py::arg("pedigree") = i.pedigree_id,
                                     py::arg("member") = i.member_id ? py::object(py::int_(*i.member_id)) : py::none(),
                                     py::arg("severity") = std::string(to_string(i.severity)),
                                     py::arg("code") = std::string(to_string(i.code)),
                                     py::arg("message") = i.message));
            }
          }
          return out;
        },
        py::arg("csv_text"), py::arg("max_age") = 94);

  m.def("pedigree_logliks",
        [](const std::string& csv_text, std::array<double, 4> female, std::array<double, 4> male, double prev,
           int max_age) {
          const PenetranceCurves curves{curve_from({female[0], female[1], female[2], female[3]}),
                                        curve_from({male[0], male[1], male[2], male[3]})};
          const auto baseline = example_crc_baseline(max_age);
          const FactorLookup lookup(curves, baseline);
          const auto gm = GenotypeModel::from_prevalence(prev);
          std::vector<double> out;
          for (const auto& ped : pedigrees_from_csv(csv_text)) {
            const auto clamped = clamp_ages(ped, max_age);
            out.push_back(pedigree_loglik(clamped, lookup.factors(clamped), gm));
          }
          return out;
        },
        py::arg("csv_text"), py::arg("female"), py::arg("male"), py::arg("prev") = 0.0001, py::arg("max_age") = 94,
        "Log-likelihood per pedigree under the illustrative baseline. Curves are "
        "(asymptote, threshold, median, first_quartile).");

  m.def("simulate_study",
        [](int n_probands, std::uint64_t seed, double mask_rate) {
          auto cfg = mlh1_like_config();
          cfg.n_probands = n_probands;
          cfg.seed = seed;
          cfg.mask_age_dx = cfg.mask_cur_age = mask_rate;
          const auto study = simulate_study(cfg);
          std::ostringstream csv;
          write_pedigrees_csv(csv, study.pedigrees);
          return py::make_tuple(csv.str(), truth_to_json(cfg, study).dump());
        },
        py::arg("n_probands") = 130, py::arg("seed") = 1, py::arg("mask_rate") = 0.0,
        "Returns (pedigree CSV text, ground-truth JSON text).");

  m.def("estimate",
        [](const std::string& csv_text, const std::string& config_json, const std::string& priors_json) {
          const auto cfg = chain_config_from_json(config_json);
          EstimationInputs inputs;
          inputs.pedigrees = pedigrees_from_csv(csv_text);
          inputs.baseline = example_crc_baseline(cfg.max_age);
          inputs.priors = priors_json.empty()
                              ? default_priors(cfg.max_age)
                              : priors_from_json(nlohmann::json::parse(priors_json), cfg.max_age, &inputs.baseline);
          PosteriorSamples samples;
          {
            py::gil_scoped_release release;
            samples = run_chains(cfg, inputs);
          }
          const auto retained = apply_burnin_thinning(samples, cfg.burn_in, cfg.thinning_factor);
          py::list chains;
          for (std::size_t i = 0; i < samples.chains.size(); ++i) {
            chains.append(py::dict(py::arg("samples") = retained.chains[i].samples,
                                   py::arg("log_posterior") = retained.chains[i].log_posterior,
                                   py::arg("acceptance_rate") = samples.chains[i].acceptance_rate(),
                                   py::arg("bound_rejections") = samples.chains[i].bound_rejections));
          }
          return py::dict(py::arg("coordinate_names") = samples.coordinate_names, py::arg("chains") = chains,
                          py::arg("diagnostics") = diagnostics(samples, retained).dump());
        },
        py::arg("csv_text"), py::arg("config_json") = "", py::arg("priors_json") = "");

  m.def("run_cli",
        [](const std::vector<std::string>& args) {
          std::ostringstream out, err;
          const int code = run_cli(args, out, err);
          return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"));
}
