#include "doctest.h"

#include <fstream>
#include <sstream>

#include "lmirt/cli.hpp"
#include "lmirt/io.hpp"
#include "lmirt/markov_likelihood.hpp"
#include "support.hpp"

using namespace lmirt;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lmirt_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void spit(const fs::path& p, const std::string& text) { std::ofstream(p, std::ios::binary) << text; }

const char* kConfig =
    "label = tiny\n"
    "states = 2\n"
    "items = 2\n"
    "mode = unconstrained\n"
    "regimes = 2\n"
    "equal = 1 2  # one matrix\n";

ModelConfig tiny_config() {
  std::istringstream is(kConfig);
  return parse_model_config(is);
}

}  // namespace

TEST_CASE("config parsing and round trip") {
  const ModelConfig cfg = tiny_config();
  CHECK(cfg.label == "tiny");
  CHECK(cfg.spec.k == 2);
  CHECK(cfg.spec.constraints.equality_classes == std::vector<std::vector<int>>{{0, 1}});
  CHECK(cfg.spec.p == 1);

  std::istringstream is(
      "states = 3\ndimensions = 2\nitems = 4\nitem_dimensions = 1 1 2 2\nmode = 2pl\nreference_items = 1 3\n"
      "regimes = 8\nequal = 1 2; 3 4; 5 6; 7 8\nidentity = 5 6\ncovariates = age\n");
  const ModelConfig full = parse_model_config(is);
  CHECK(count_free_params(full.spec) == 32);
  std::istringstream again(format_model_config(full));
  const ModelConfig back = parse_model_config(again);
  CHECK(spec_to_json(back.spec) == spec_to_json(full.spec));
  CHECK(back.covariates == full.covariates);
}

TEST_CASE("config errors carry line numbers") {
  auto fails_with = [](const std::string& text, const std::string& needle) {
    std::istringstream is(text);
    try {
      parse_model_config(is, "m.cfg");
    } catch (const ParseError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("no error for " << text);
  };
  fails_with("states = 2\nbogus = 1\n", "m.cfg:2: unknown key 'bogus'");
  fails_with("states = two\n", "m.cfg:1: malformed state count");
  fails_with("states = 2\nstates = 3\n", "m.cfg:2: duplicate key");
  fails_with("states = 2\nitems = 2\ndimensions = 2\nitem_dimensions = 1\nmode = 2pl\n", "item 2 unassigned");
  fails_with("states 2\n", "m.cfg:1: expected 'key = value'");
}

TEST_CASE("dataset parsing and errors") {
  const ModelConfig cfg = tiny_config();
  {
    std::istringstream data(
        "subject_id,occasion,item_type,regime,response\n"
        "a,2,2,1,0\n"
        "a,1,1,,1\n"
        "b,1,2,,1\n");
    const Dataset d = parse_dataset(data, "d.csv", nullptr, "", cfg);
    REQUIRE(d.n() == 2);
    CHECK(d.subjects[0].trials.size() == 2);
    CHECK(d.subjects[0].trials[0].item == 0);
    CHECK(d.subjects[0].trials[1].regime == 0);
    CHECK(d.total_trials() == 3);
  }
  auto fails_with = [&](const std::string& body, const std::string& needle) {
    std::istringstream data("subject_id,occasion,item_type,regime,response\n" + body);
    try {
      parse_dataset(data, "d.csv", nullptr, "", cfg);
    } catch (const ParseError& e) {
      INFO(e.what());
      CHECK(std::string(e.what()).find(needle) != std::string::npos);
      return;
    }
    FAIL("no error for " << body);
  };
  fails_with("a,1,1,,1\na,2,3,1,0\n", "d.csv:3: unknown item type 3");
  fails_with("a,1,1,,1\na,2,1,,0\n", "d.csv:3: subject a: regime gap");
  fails_with("a,1,1,,1\na,3,1,1,0\n", "d.csv:3: subject a: occasion gap");
  fails_with("a,1,1,,1\na,2,1\n", "d.csv:3: malformed row");
  fails_with("a,1,1,,2\n", "d.csv:2: response must be 0 or 1");
  fails_with("a,1,1,3,1\n", "d.csv:2: unknown regime 3");
}

TEST_CASE("missing covariate names the subject") {
  std::istringstream is("states = 2\nitems = 1\nmode = unconstrained\ncovariates = age\n");
  const ModelConfig cfg = parse_model_config(is);
  std::istringstream data("subject_id,occasion,item_type,regime,response\nkid7,1,1,,1\nkid8,1,1,,0\n");
  std::istringstream cov("subject_id,age\nkid7,40\nkid8,\n");
  try {
    parse_dataset(data, "d.csv", &cov, "c.csv", cfg);
    FAIL("expected an error");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find("missing covariates for subject kid8") != std::string::npos);
  }
}

TEST_CASE("params JSON round trip") {
  Rng rng(2);
  for (auto mode : {ItemMode::Unconstrained, ItemMode::OnePL, ItemMode::TwoPL}) {
    const auto spec = oracle::two_dim_spec(mode, 3, 4, 2);
    const ParamSet p = oracle::random_params(spec, rng);
    const ParamSet q = params_from_json(json::parse(params_to_json(p, spec).dump()), spec);
    CHECK(q.chain.phi == p.chain.phi);
    CHECK(q.chain.pi == p.chain.pi);
    if (mode == ItemMode::Unconstrained) CHECK(q.item.lambda == p.item.lambda);
    else CHECK(q.support.xi == p.support.xi);
    CHECK(spec_to_json(spec_from_json(spec_to_json(spec))) == spec_to_json(spec));
  }
}

TEST_CASE("cli: simulate, fit, compare, test") {
  const fs::path dir = scratch("cli");
  std::ostringstream out, err;
  cli::RunConfig sim;
  sim.out = dir / "sim";
  sim.n = 12;
  sim.seed = 3;
  REQUIRE(cli::cmd_simulate(sim, out, err) == cli::kOk);
  const json manifest = json::parse(slurp(sim.out / "manifest.json"));
  CHECK(manifest["seed"] == 3);
  CHECK(manifest["rows"] == 12 * 132);
  // Independent line count.
  std::ifstream data_file(sim.out / "data.csv");
  std::string line;
  std::size_t lines = 0;
  while (std::getline(data_file, line)) ++lines;
  CHECK(lines - 1 == manifest["rows"].get<std::size_t>());

  cli::RunConfig f;
  f.model = sim.out / "model.cfg";
  f.data = sim.out / "data.csv";
  f.covariates = sim.out / "covariates.csv";
  f.out = dir / "fit";
  f.starts = 2;
  const int rc = cli::cmd_fit(f, out, err);
  CHECK((rc == cli::kOk || rc == cli::kEstimation));
  const json fitted = json::parse(slurp(f.out / "fit.json"));
  CHECK(fitted["g"] == 38);
  // Written parameters re-evaluate to the written log-likelihood.
  const ModelConfig cfg = read_model_config(f.model);
  const Dataset d = read_dataset(f.data, f.covariates, cfg);
  const ParamSet p = params_from_json(fitted["params"], cfg.spec);
  CHECK(std::abs(log_likelihood(d, p, cfg.spec) - fitted["loglik"].get<double>()) <= 1e-8);
  CHECK(fitted["bic"].get<double>() ==
        doctest::Approx(-2 * fitted["loglik"].get<double>() + 38 * std::log(12.0)).epsilon(1e-14));
  CHECK(fs::exists(f.out / "posteriors.csv"));

  // Unidimensional variant for compare and test.
  std::string uni = slurp(f.model) + "unidimensional = yes\n";
  spit(dir / "uni.cfg", uni);
  cli::RunConfig f2 = f;
  f2.model = dir / "uni.cfg";
  f2.out = dir / "fit_uni";
  cli::cmd_fit(f2, out, err);

  cli::RunConfig cmp;
  cmp.fits = {f.out / "fit.json", f2.out / "fit.json"};
  cmp.out = dir / "cmp";
  CHECK(cli::cmd_compare(cmp, out, err) == cli::kOk);
  const json table = json::parse(slurp(cmp.out / "comparison.json"));
  CHECK(table["rows"].size() == 2);
  CHECK(table["rows"][0]["g"] == 37);

  cli::RunConfig t = f;
  t.null_model = dir / "uni.cfg";
  t.alt_model = f.model;
  t.out = dir / "test";
  CHECK(cli::cmd_test(t, out, err) == cli::kOk);
  const json report = json::parse(slurp(t.out / "test.json"));
  CHECK(report["df"] == 1);
  CHECK(report["D"].get<double>() >= 0.0);
  CHECK(report["boundary"] == false);

  // Swapped pair is not nested.
  std::swap(t.null_model, t.alt_model);
  std::ostringstream err2;
  CHECK(cli::cmd_test(t, out, err2) == cli::kValidation);
  CHECK(err2.str().find("not nested") != std::string::npos);

  // Fits from different datasets cannot be compared.
  cli::RunConfig sim2 = sim;
  sim2.seed = 4;
  sim2.out = dir / "sim2";
  cli::cmd_simulate(sim2, out, err);
  cli::RunConfig f3 = f2;
  f3.data = sim2.out / "data.csv";
  f3.covariates = sim2.out / "covariates.csv";
  f3.out = dir / "fit3";
  cli::cmd_fit(f3, out, err);
  cmp.fits = {f.out / "fit.json", f3.out / "fit.json"};
  std::ostringstream err3;
  CHECK(cli::cmd_compare(cmp, out, err3) == cli::kValidation);
  CHECK(err3.str().find("different dataset") != std::string::npos);
}

TEST_CASE("cli: k sweep, missing files and k = 1 hand BIC") {
  const fs::path dir = scratch("sweep");
  spit(dir / "m.cfg", kConfig);
  spit(dir / "d.csv",
       "subject_id,occasion,item_type,regime,response\n"
       "a,1,1,,1\na,2,2,1,1\na,3,1,2,0\nb,1,1,,0\nb,2,2,2,0\nb,3,2,1,1\nc,1,2,,1\nc,2,1,1,1\n");
  std::ostringstream out, err;
  cli::RunConfig c;
  c.model = dir / "m.cfg";
  c.data = dir / "d.csv";
  c.out = dir / "cmp";
  c.k_values = {1, 2};
  c.starts = 2;
  CHECK(cli::cmd_compare(c, out, err) == cli::kOk);
  const json table = json::parse(slurp(c.out / "comparison.json"));
  REQUIRE(table["rows"].size() == 2);
  CHECK(table["rows"][0]["loglik"].get<double>() <= table["rows"][1]["loglik"].get<double>() + 1e-9);

  // k = 1 fit: BIC by hand from the output fields.
  std::string k1 = kConfig;
  k1.replace(k1.find("states = 2"), 10, "states = 1");
  spit(dir / "k1.cfg", k1);
  cli::RunConfig f;
  f.model = dir / "k1.cfg";
  f.data = c.data;
  f.out = dir / "k1";
  f.starts = 1;
  CHECK(cli::cmd_fit(f, out, err) == cli::kOk);
  const json j = json::parse(slurp(f.out / "fit.json"));
  CHECK(j["bic"].get<double>() == doctest::Approx(-2 * j["loglik"].get<double>() + j["g"].get<int>() * std::log(3.0)));
  CHECK(j["g"] == 2);

  cli::RunConfig missing = f;
  missing.data = dir / "nope.csv";
  std::ostringstream e2;
  CHECK(cli::cmd_fit(missing, out, e2) == cli::kValidation);
  CHECK(e2.str().find("does not exist") != std::string::npos);
}
