#include "lmirt/cli.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "lmirt/em_estimator.hpp"
#include "lmirt/inference.hpp"
#include "lmirt/io.hpp"
#include "lmirt/simulator.hpp"

namespace lmirt::cli {

namespace fs = std::filesystem;

namespace {

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions o;
  o.n_starts = cfg.starts;
  o.seed = cfg.seed;
  o.tol = cfg.tol;
  o.max_iter = cfg.max_iter;
  o.workers = cfg.workers;
  if (const auto errs = check_options(o); !errs.empty()) throw std::invalid_argument("options: " + errs.front());
  return o;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw std::invalid_argument("output directory " + dir.string() + " is not writable");
}

void require_file(const fs::path& p, const std::string& what) {
  if (p.empty()) throw std::invalid_argument(what + " is required");
  if (!fs::exists(p)) throw std::invalid_argument(what + " " + p.string() + " does not exist");
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot write " + path.string());
  f << text;
}

void write_json(const fs::path& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

json read_json(const fs::path& path) {
  std::ifstream f(path);
  if (!f) throw ParseError("cannot open " + path.string());
  try {
    return json::parse(f);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

Dataset load_data(const RunConfig& cfg, const ModelConfig& model) {
  require_file(cfg.data, "--data");
  if (!model.covariates.empty()) require_file(cfg.covariates, "--covariates");
  const Dataset data = read_dataset(cfg.data, model.covariates.empty() ? fs::path() : cfg.covariates, model);
  if (const auto errs = check_dataset(data, model.spec); !errs.empty()) throw ParseError(cfg.data.string() + ": " + errs.front());
  return data;
}

std::string posteriors_csv(const Dataset& data, const ParamSet& params, const ModelSpec& spec) {
  std::ostringstream os;
  os << "subject_id,occasion,map_state";
  for (int c = 0; c < spec.k; ++c) os << ",p" << c + 1;
  os << '\n';
  const LikelihoodContext ctx(params, spec);
  for (const auto& s : data.subjects) {
    const auto fb = forward_backward(s, ctx);
    for (Eigen::Index t = 0; t < fb.state_post.rows(); ++t) {
      Eigen::Index best = 0;
      fb.state_post.row(t).maxCoeff(&best);
      os << s.id << ',' << t + 1 << ',' << best + 1;
      for (int c = 0; c < spec.k; ++c) os << ',' << format_double(fb.state_post(t, c), 10);
      os << '\n';
    }
  }
  return os.str();
}

std::string fixed(double v, int digits) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string table_text(const std::vector<ComparisonRow>& rows) {
  std::ostringstream os;
  os << std::left << std::setw(28) << "model" << std::right << std::setw(14) << "loglik" << std::setw(6) << "g"
     << std::setw(14) << "BIC" << std::setw(14) << "BIC*" << '\n';
  auto mark = [](bool class_min, bool overall) { return std::string(overall ? "**" : class_min ? "* " : "  "); };
  for (const auto& r : rows) {
    os << std::left << std::setw(28) << r.label << std::right << std::setw(14) << fixed(r.loglik, 3) << std::setw(6) << r.g
       << std::setw(12) << fixed(r.bic, 2) << mark(r.bic_min_in_class, r.bic_min) << std::setw(12) << fixed(r.bic_star, 2)
       << mark(r.bic_star_min_in_class, r.bic_star_min) << '\n';
  }
  os << "(* smallest within rows of equal g, ** smallest overall)\n";
  return os.str();
}

json table_json(const std::vector<ComparisonRow>& rows, std::size_t n, std::size_t total, const std::string& fp) {
  json j;
  j["n"] = n;
  j["total_trials"] = total;
  j["fingerprint"] = fp;
  json arr = json::array();
  for (const auto& r : rows)
    arr.push_back({{"label", r.label},
                   {"loglik", r.loglik},
                   {"g", r.g},
                   {"bic", r.bic},
                   {"bic_star", r.bic_star},
                   {"bic_min_in_class", r.bic_min_in_class},
                   {"bic_star_min_in_class", r.bic_star_min_in_class},
                   {"bic_min", r.bic_min},
                   {"bic_star_min", r.bic_star_min}});
  j["rows"] = arr;
  return j;
}

template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const EstimationFailure& e) {
    err << "error: estimation failed: " << e.what() << '\n';
    return kEstimation;
  } catch (const DegenerateLikelihood& e) {
    err << "error: estimation failed: " << e.what() << '\n';
    return kEstimation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
}

}  // namespace

int cmd_fit(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(cfg.model, "--model");
    const ModelConfig model = read_model_config(cfg.model);
    const Dataset data = load_data(cfg, model);
    const FitOptions opts = fit_options(cfg);
    ensure_dir(cfg.out);

    const FitResult res = fit(data, model.spec, opts);
    write_json(cfg.out / "fit.json", fit_to_json(res, model, data, opts));
    write_text(cfg.out / "posteriors.csv", posteriors_csv(data, res.params, model.spec));

    if (!cfg.quiet) {
      out << "model      " << (model.label.empty() ? cfg.model.filename().string() : model.label) << '\n';
      out << "subjects   " << data.n() << " (" << data.total_trials() << " trials)\n";
      out << "loglik     " << fixed(res.loglik, 4) << '\n';
      out << "g          " << res.g << '\n';
      out << "BIC        " << fixed(bic(res.loglik, res.g, data.n()), 3) << '\n';
      out << "BIC*       " << fixed(bic_star(res.loglik, res.g, data.total_trials()), 3) << '\n';
      out << "iterations " << res.n_iter << (res.converged ? "" : " (not converged)") << '\n';
      for (const auto& w : res.warnings) out << "warning: " << w << '\n';
    }
    return res.converged ? kOk : kEstimation;
  });
}

int cmd_compare(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::vector<LabeledFit> fits;
    std::size_t n = 0, total = 0;
    std::string fp;
    if (!cfg.fits.empty()) {
      for (const auto& path : cfg.fits) {
        const json j = read_json(path);
        const std::string this_fp = j.at("data").at("fingerprint").get<std::string>();
        if (fp.empty()) {
          fp = this_fp;
          n = j["data"]["n"].get<std::size_t>();
          total = j["data"]["total_trials"].get<std::size_t>();
        } else if (fp != this_fp) {
          throw std::invalid_argument("fit " + path.string() + " was estimated on a different dataset");
        }
        std::string label = j.value("label", "");
        if (label.empty()) label = path.parent_path().filename().string();
        fits.push_back({label, j.at("loglik").get<double>(), j.at("g").get<int>()});
      }
    } else {
      require_file(cfg.model, "--model (or --fits)");
      if (cfg.k_values.empty()) throw std::invalid_argument("compare needs --fits or --model with --k");
      const ModelConfig base = read_model_config(cfg.model);
      const Dataset data = load_data(cfg, base);
      const FitOptions opts = fit_options(cfg);
      n = data.n();
      total = data.total_trials();
      fp = hex64(fingerprint(data));
      for (int k : cfg.k_values) {
        ModelConfig m = base;
        m.spec.k = k;
        require_valid(m.spec);
        const FitResult res = fit(data, m.spec, opts);
        fits.push_back({"k=" + std::to_string(k), res.loglik, res.g});
      }
    }
    if (fits.size() < 2) throw std::invalid_argument("compare needs at least two models");
    const auto rows = model_table(fits, n, total);
    const std::string text = table_text(rows);
    if (!cfg.quiet) out << text;
    ensure_dir(cfg.out);
    write_text(cfg.out / "comparison.txt", text);
    write_json(cfg.out / "comparison.json", table_json(rows, n, total, fp));
    return kOk;
  });
}

int cmd_test(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    require_file(cfg.null_model, "--null");
    require_file(cfg.alt_model, "--alt");
    const ModelConfig null_cfg = read_model_config(cfg.null_model);
    const ModelConfig alt_cfg = read_model_config(cfg.alt_model);
    if (null_cfg.covariates != alt_cfg.covariates) throw NestingError("models must declare the same covariate columns");
    if (const auto v = nesting_violations(null_cfg.spec, alt_cfg.spec); !v.empty())
      throw NestingError("models are not nested: " + v.front());
    const Dataset data = load_data(cfg, alt_cfg);
    const FitOptions opts = fit_options(cfg);
    ensure_dir(cfg.out);

    const FitResult f0 = fit(data, null_cfg.spec, opts);
    const FitResult f1 = fit_alternative(data, alt_cfg.spec, opts, f0, null_cfg.spec);
    const bool boundary = is_boundary_hypothesis(null_cfg.spec, alt_cfg.spec);
    BootstrapOptions boot;
    boot.replicates = boundary ? cfg.bootstrap : 0;
    boot.seed = cfg.seed;
    boot.fit = opts;
    const LRTestResult r = lr_test(data, f0, null_cfg.spec, f1, alt_cfg.spec, boundary, boot);

    json j;
    j["null"] = {{"label", null_cfg.label}, {"loglik", f0.loglik}, {"g", f0.g}};
    j["alternative"] = {{"label", alt_cfg.label}, {"loglik", f1.loglik}, {"g", f1.g}};
    j["D"] = r.D;
    j["df"] = r.df;
    j["p_value_chisq"] = r.p_value_chisq;
    j["p_value_bootstrap"] = r.p_value_bootstrap ? json(*r.p_value_bootstrap) : json(nullptr);
    j["bootstrap_replicates"] = r.bootstrap_stats.size();
    j["boundary"] = r.boundary;
    j["seed"] = cfg.seed;
    j["warnings"] = r.warnings;
    write_json(cfg.out / "test.json", j);

    if (!cfg.quiet) {
      out << "null         " << null_cfg.label << "  loglik " << fixed(f0.loglik, 4) << "  g " << f0.g << '\n';
      out << "alternative  " << alt_cfg.label << "  loglik " << fixed(f1.loglik, 4) << "  g " << f1.g << '\n';
      out << "D            " << fixed(r.D, 4) << '\n';
      out << "df           " << r.df << '\n';
      out << "p (chi2)     " << format_double(r.p_value_chisq, 6) << (r.boundary ? "  (not valid on the boundary)" : "")
          << '\n';
      if (r.p_value_bootstrap)
        out << "p (boot)     " << format_double(*r.p_value_bootstrap, 6) << "  M=" << r.bootstrap_stats.size() << '\n';
      out << "boundary     " << (r.boundary ? "yes" : "no") << '\n';
      for (const auto& w : r.warnings) out << "warning: " << w << '\n';
    }
    return kOk;
  });
}

int cmd_simulate(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ensure_dir(cfg.out);
    ModelConfig model;
    ParamSet truth;
    SimulatedDataset sim;
    json manifest;
    if (cfg.params.empty()) {
      if (cfg.n < 0) throw std::invalid_argument("--n must be non-negative");
      const Fixture fx = paper_fixture(cfg.n);
      model.label = "fixture";
      model.spec = fx.spec;
      for (const auto& c : fx.plan.covariates) model.covariates.push_back(c.name);
      truth = fx.params;
      sim = simulate(fx.params, fx.spec, fx.plan, cfg.seed);
      manifest["source"] = "fixture";
      manifest["provenance"] = fx.provenance;
    } else {
      // Responses redrawn on the design (items, regimes, covariates) of an existing dataset.
      require_file(cfg.model, "--model");
      model = read_model_config(cfg.model);
      const Dataset design = load_data(cfg, model);
      truth = params_from_json(read_json(cfg.params), model.spec);
      if (const auto errs = check_params(truth, model.spec); !errs.empty())
        throw std::invalid_argument("parameters do not match the model: " + errs.front());
      sim = simulate_responses(design, truth, model.spec, cfg.seed);
      manifest["source"] = "design";
    }

    write_dataset(sim.data, cfg.out / "data.csv", cfg.out / "covariates.csv");
    write_paths(sim.data, sim.paths, cfg.out / "truth.csv");
    write_text(cfg.out / "model.cfg", format_model_config(model));
    write_json(cfg.out / "params.json", params_to_json(truth, model.spec));

    manifest["seed"] = cfg.seed;
    manifest["n"] = sim.data.n();
    manifest["rows"] = sim.data.total_trials();
    manifest["fingerprint"] = hex64(fingerprint(sim.data));
    manifest["files"] = {"data.csv", "covariates.csv", "truth.csv", "model.cfg", "params.json"};
    write_json(cfg.out / "manifest.json", manifest);

    if (!cfg.quiet)
      out << "wrote " << sim.data.n() << " subjects, " << sim.data.total_trials() << " rows to " << cfg.out.string()
          << " (seed " << cfg.seed << ")\n";
    return kOk;
  });
}

}  // namespace lmirt::cli
