#include "lmirt/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <unordered_map>

namespace lmirt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(trim(cur));
  if (!s.empty() && s.back() == sep) out.push_back("");
  return out;
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

[[noreturn]] void parse_fail(const std::string& source, int line, const std::string& msg) {
  throw ParseError(source + ":" + std::to_string(line) + ": " + msg);
}

int parse_int(const std::string& text, const std::string& source, int line, const std::string& what) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    parse_fail(source, line, "malformed " + what + " '" + text + "'");
  }
}

double parse_double(const std::string& text, const std::string& source, int line, const std::string& what) {
  try {
    std::size_t used = 0;
    const double v = std::stod(text, &used);
    if (used != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    parse_fail(source, line, "malformed " + what + " '" + text + "'");
  }
}

std::vector<int> parse_int_list(const std::string& text, const std::string& source, int line, const std::string& what) {
  std::vector<int> out;
  std::istringstream is(text);
  std::string tok;
  while (is >> tok) out.push_back(parse_int(tok, source, line, what));
  return out;
}

bool parse_bool(const std::string& text, const std::string& source, int line) {
  const std::string t = lower(text);
  if (t == "yes" || t == "true" || t == "1" || t == "on") return true;
  if (t == "no" || t == "false" || t == "0" || t == "off") return false;
  parse_fail(source, line, "expected yes/no, got '" + text + "'");
}

// "1 2; 5 6" -> {{0,1},{4,5}}
std::vector<std::vector<int>> parse_groups(const std::string& text, const std::string& source, int line) {
  std::vector<std::vector<int>> out;
  for (const auto& part : split(text, ';')) {
    if (part.empty()) continue;
    auto ids = parse_int_list(part, source, line, "regime");
    for (int& r : ids) --r;
    out.push_back(ids);
  }
  return out;
}

std::string join_groups(const std::vector<std::vector<int>>& groups) {
  std::string out;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    if (g) out += "; ";
    for (std::size_t i = 0; i < groups[g].size(); ++i) out += (i ? " " : "") + std::to_string(groups[g][i] + 1);
  }
  return out;
}

}  // namespace

std::string format_double(double v, int digits) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*g", digits, v);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

// ---------------------------------------------------------------------------
// Model config

ModelConfig parse_model_config(std::istream& in, const std::string& source) {
  ModelConfig cfg;
  ModelSpec& spec = cfg.spec;
  std::vector<std::vector<int>> equal_groups;
  bool have_regimes = false;
  std::string line;
  int lineno = 0;
  std::map<std::string, int> seen;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) parse_fail(source, lineno, "expected 'key = value'");
    const std::string key = lower(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    if (seen.count(key)) parse_fail(source, lineno, "duplicate key '" + key + "'");
    seen[key] = lineno;

    if (key == "label") {
      cfg.label = value;
    } else if (key == "states") {
      spec.k = parse_int(value, source, lineno, "state count");
    } else if (key == "dimensions") {
      spec.s = parse_int(value, source, lineno, "dimension count");
    } else if (key == "items") {
      spec.items.J = parse_int(value, source, lineno, "item count");
    } else if (key == "item_dimensions") {
      spec.items.dim_of = parse_int_list(value, source, lineno, "dimension");
      for (int& d : spec.items.dim_of) --d;
    } else if (key == "mode") {
      try {
        spec.items.mode = parse_item_mode(value);
      } catch (const std::invalid_argument& e) {
        parse_fail(source, lineno, e.what());
      }
    } else if (key == "reference_items") {
      spec.items.reference_item = parse_int_list(value, source, lineno, "item");
      for (int& j : spec.items.reference_item) --j;
    } else if (key == "regimes") {
      spec.regimes = parse_int(value, source, lineno, "regime count");
      have_regimes = true;
    } else if (key == "equal") {
      equal_groups = parse_groups(value, source, lineno);
    } else if (key == "identity") {
      spec.constraints.identity_classes = parse_groups(value, source, lineno);
    } else if (key == "unidimensional") {
      spec.constraints.unidimensional = parse_bool(value, source, lineno);
    } else if (key == "covariate_free") {
      spec.constraints.covariate_free_init = parse_bool(value, source, lineno);
    } else if (key == "covariates") {
      std::istringstream is(value);
      std::string name;
      while (is >> name) cfg.covariates.push_back(name);
    } else {
      parse_fail(source, lineno, "unknown key '" + key + "'");
    }
  }
  if (!have_regimes) spec.regimes = 1;
  spec.p = 1 + static_cast<int>(cfg.covariates.size());

  // Regimes not named in any group form singleton classes.
  std::vector<bool> grouped(std::max(spec.regimes, 0), false);
  for (const auto& g : equal_groups)
    for (int r : g)
      if (r >= 0 && r < spec.regimes) grouped[r] = true;
  std::vector<std::vector<int>> classes = equal_groups;
  for (int r = 0; r < spec.regimes; ++r)
    if (!grouped[r]) classes.push_back({r});
  std::sort(classes.begin(), classes.end(), [](const auto& a, const auto& b) {
    return *std::min_element(a.begin(), a.end()) < *std::min_element(b.begin(), b.end());
  });
  spec.constraints.equality_classes = classes;

  if (spec.items.dim_of.empty() && spec.s == 1) spec.items.dim_of.assign(spec.items.J, 0);
  if (spec.items.reference_item.empty() && spec.items.mode != ItemMode::Unconstrained) {
    for (int d = 0; d < spec.s; ++d) {
      const auto it = std::find(spec.items.dim_of.begin(), spec.items.dim_of.end(), d);
      spec.items.reference_item.push_back(it == spec.items.dim_of.end() ? -1 : static_cast<int>(it - spec.items.dim_of.begin()));
    }
  }

  if (const auto errors = validate(spec); !errors.empty()) {
    std::string msg = source + ": invalid model:";
    for (const auto& e : errors) msg += "\n  " + e.field + ": " + e.message;
    throw ParseError(msg);
  }
  return cfg;
}

ModelConfig read_model_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open model config " + path.string());
  return parse_model_config(in, path.string());
}

std::string format_model_config(const ModelConfig& cfg) {
  const ModelSpec& spec = cfg.spec;
  std::ostringstream os;
  if (!cfg.label.empty()) os << "label = " << cfg.label << "\n";
  os << "states = " << spec.k << "\n";
  os << "dimensions = " << spec.s << "\n";
  os << "items = " << spec.items.J << "\n";
  os << "item_dimensions =";
  for (int d : spec.items.dim_of) os << " " << d + 1;
  os << "\nmode = " << to_string(spec.items.mode) << "\n";
  if (spec.items.mode != ItemMode::Unconstrained) {
    os << "reference_items =";
    for (int j : spec.items.reference_item) os << " " << j + 1;
    os << "\n";
  }
  os << "regimes = " << spec.regimes << "\n";
  std::vector<std::vector<int>> groups;
  for (const auto& c : spec.constraints.equality_classes)
    if (c.size() > 1) groups.push_back(c);
  if (!groups.empty()) os << "equal = " << join_groups(groups) << "\n";
  if (!spec.constraints.identity_classes.empty()) os << "identity = " << join_groups(spec.constraints.identity_classes) << "\n";
  if (spec.constraints.unidimensional) os << "unidimensional = yes\n";
  if (spec.constraints.covariate_free_init) os << "covariate_free = yes\n";
  if (!cfg.covariates.empty()) {
    os << "covariates =";
    for (const auto& c : cfg.covariates) os << " " << c;
    os << "\n";
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Data files

Dataset parse_dataset(std::istream& data_in, const std::string& data_source, std::istream* cov_in,
                      const std::string& cov_source, const ModelConfig& cfg) {
  const ModelSpec& spec = cfg.spec;

  struct Row {
    int line;
    int occasion;
    Trial trial;
  };
  std::vector<std::string> order;
  std::unordered_map<std::string, std::vector<Row>> rows;

  std::string line;
  int lineno = 0;
  if (!std::getline(data_in, line)) parse_fail(data_source, 1, "empty data file");
  ++lineno;
  const auto header = split(trim(line), ',');
  const std::vector<std::string> expected{"subject_id", "occasion", "item_type", "regime", "response"};
  if (header != expected)
    parse_fail(data_source, lineno, "header must be subject_id,occasion,item_type,regime,response");

  while (std::getline(data_in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(trim(line), ',');
    if (f.size() != 5) parse_fail(data_source, lineno, "malformed row: expected 5 fields, got " + std::to_string(f.size()));
    if (f[0].empty()) parse_fail(data_source, lineno, "malformed row: empty subject_id");
    Row r;
    r.line = lineno;
    r.occasion = parse_int(f[1], data_source, lineno, "occasion");
    const int item = parse_int(f[2], data_source, lineno, "item_type");
    if (item < 1 || item > spec.items.J) parse_fail(data_source, lineno, "unknown item type " + f[2]);
    r.trial.item = item - 1;
    if (f[3].empty()) {
      r.trial.regime = -1;
    } else {
      const int regime = parse_int(f[3], data_source, lineno, "regime");
      if (regime < 1 || regime > spec.regimes) parse_fail(data_source, lineno, "unknown regime " + f[3]);
      r.trial.regime = regime - 1;
    }
    if (f[4] != "0" && f[4] != "1") parse_fail(data_source, lineno, "response must be 0 or 1, got '" + f[4] + "'");
    r.trial.response = f[4] == "1";
    auto [it, inserted] = rows.try_emplace(f[0]);
    if (inserted) order.push_back(f[0]);
    it->second.push_back(r);
  }

  Dataset data;
  data.covariate_names = cfg.covariates;
  for (const auto& id : order) {
    auto& rs = rows[id];
    std::stable_sort(rs.begin(), rs.end(), [](const Row& a, const Row& b) { return a.occasion < b.occasion; });
    SubjectRecord s;
    s.id = id;
    for (std::size_t t = 0; t < rs.size(); ++t) {
      const Row& r = rs[t];
      if (r.occasion != static_cast<int>(t) + 1)
        parse_fail(data_source, r.line, "subject " + id + ": occasion gap, expected occasion " + std::to_string(t + 1) +
                                            ", found " + std::to_string(r.occasion));
      if (t == 0 && r.trial.regime != -1)
        parse_fail(data_source, r.line, "subject " + id + ": regime must be empty on occasion 1");
      if (t > 0 && r.trial.regime == -1)
        parse_fail(data_source, r.line, "subject " + id + ": regime gap, occasion " + std::to_string(r.occasion) +
                                            " has no regime");
      s.trials.push_back(r.trial);
    }
    s.x = Eigen::VectorXd::Ones(spec.p);
    data.subjects.push_back(std::move(s));
  }

  if (!cfg.covariates.empty()) {
    if (!cov_in) throw ParseError("model uses covariates but no covariate file was given");
    lineno = 0;
    if (!std::getline(*cov_in, line)) parse_fail(cov_source, 1, "empty covariate file");
    ++lineno;
    const auto names = split(trim(line), ',');
    if (names.empty() || names[0] != "subject_id") parse_fail(cov_source, 1, "header must start with subject_id");
    std::vector<int> column;
    for (const auto& want : cfg.covariates) {
      const auto it = std::find(names.begin(), names.end(), want);
      if (it == names.end()) parse_fail(cov_source, 1, "covariate column '" + want + "' not found");
      column.push_back(static_cast<int>(it - names.begin()));
    }
    std::unordered_map<std::string, Eigen::VectorXd> values;
    while (std::getline(*cov_in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      const auto f = split(trim(line), ',');
      if (f.size() != names.size()) parse_fail(cov_source, lineno, "malformed row: expected " + std::to_string(names.size()) + " fields");
      Eigen::VectorXd x = Eigen::VectorXd::Ones(spec.p);
      for (std::size_t q = 0; q < column.size(); ++q) {
        if (f[column[q]].empty()) continue;  // left missing; caught below
        x(q + 1) = parse_double(f[column[q]], cov_source, lineno, "covariate");
      }
      bool complete = true;
      for (int col : column) complete &= !f[col].empty();
      if (!complete) continue;
      if (values.count(f[0])) parse_fail(cov_source, lineno, "duplicate subject " + f[0]);
      values.emplace(f[0], x);
    }
    for (auto& s : data.subjects) {
      const auto it = values.find(s.id);
      if (it == values.end()) throw ParseError(cov_source + ": missing covariates for subject " + s.id);
      s.x = it->second;
    }
  }
  return data;
}

Dataset read_dataset(const std::filesystem::path& data_path, const std::filesystem::path& cov_path,
                     const ModelConfig& cfg) {
  std::ifstream data_in(data_path);
  if (!data_in) throw ParseError("cannot open data file " + data_path.string());
  std::ifstream cov_in;
  std::istream* cov = nullptr;
  if (!cov_path.empty()) {
    cov_in.open(cov_path);
    if (!cov_in) throw ParseError("cannot open covariate file " + cov_path.string());
    cov = &cov_in;
  }
  return parse_dataset(data_in, data_path.string(), cov, cov_path.string(), cfg);
}

void write_dataset(const Dataset& data, const std::filesystem::path& data_path,
                   const std::filesystem::path& cov_path) {
  std::ofstream out(data_path, std::ios::binary);
  out << "subject_id,occasion,item_type,regime,response\n";
  for (const auto& s : data.subjects) {
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      const Trial& tr = s.trials[t];
      out << s.id << ',' << t + 1 << ',' << tr.item + 1 << ',';
      if (t > 0) out << tr.regime + 1;
      out << ',' << tr.response << '\n';
    }
  }
  std::ofstream cov(cov_path, std::ios::binary);
  cov << "subject_id";
  for (const auto& name : data.covariate_names) cov << ',' << name;
  cov << '\n';
  for (const auto& s : data.subjects) {
    cov << s.id;
    for (Eigen::Index q = 1; q < s.x.size(); ++q) cov << ',' << format_double(s.x(q));
    cov << '\n';
  }
}

void write_paths(const Dataset& data, const std::vector<std::vector<int>>& paths, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  out << "subject_id,occasion,state\n";
  for (std::size_t i = 0; i < data.n(); ++i)
    for (std::size_t t = 0; t < paths[i].size(); ++t) out << data.subjects[i].id << ',' << t + 1 << ',' << paths[i][t] + 1 << '\n';
}

// ---------------------------------------------------------------------------
// JSON

namespace {

json matrix_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

json vector_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows) throw ParseError(what + ": expected " + std::to_string(rows) + " rows");
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    if (!j[r].is_array() || static_cast<Eigen::Index>(j[r].size()) != cols) throw ParseError(what + ": expected " + std::to_string(cols) + " columns");
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = j[r][c].get<double>();
  }
  return m;
}

Eigen::VectorXd vector_from(const json& j, Eigen::Index n, const std::string& what) {
  if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != n) throw ParseError(what + ": expected " + std::to_string(n) + " entries");
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v(i) = j[i].get<double>();
  return v;
}

json groups_json(const std::vector<std::vector<int>>& groups) {
  json out = json::array();
  for (const auto& g : groups) {
    json ids = json::array();
    for (int r : g) ids.push_back(r + 1);
    out.push_back(ids);
  }
  return out;
}

std::vector<std::vector<int>> groups_from(const json& j) {
  std::vector<std::vector<int>> out;
  for (const auto& g : j) {
    std::vector<int> ids;
    for (const auto& r : g) ids.push_back(r.get<int>() - 1);
    out.push_back(ids);
  }
  return out;
}

}  // namespace

json spec_to_json(const ModelSpec& spec) {
  json j;
  j["states"] = spec.k;
  j["dimensions"] = spec.s;
  j["items"] = spec.items.J;
  json dims = json::array();
  for (int d : spec.items.dim_of) dims.push_back(d + 1);
  j["item_dimensions"] = dims;
  j["mode"] = to_string(spec.items.mode);
  json refs = json::array();
  for (int r : spec.items.reference_item) refs.push_back(r + 1);
  j["reference_items"] = refs;
  j["regimes"] = spec.regimes;
  j["equality_classes"] = groups_json(spec.constraints.equality_classes);
  j["identity_classes"] = groups_json(spec.constraints.identity_classes);
  j["unidimensional"] = spec.constraints.unidimensional;
  j["covariate_free"] = spec.constraints.covariate_free_init;
  j["p"] = spec.p;
  return j;
}

ModelSpec spec_from_json(const json& j) {
  try {
    ModelSpec spec;
    spec.k = j.at("states").get<int>();
    spec.s = j.at("dimensions").get<int>();
    spec.items.J = j.at("items").get<int>();
    for (const auto& d : j.at("item_dimensions")) spec.items.dim_of.push_back(d.get<int>() - 1);
    spec.items.mode = parse_item_mode(j.at("mode").get<std::string>());
    for (const auto& r : j.at("reference_items")) spec.items.reference_item.push_back(r.get<int>() - 1);
    spec.regimes = j.at("regimes").get<int>();
    spec.constraints.equality_classes = groups_from(j.at("equality_classes"));
    spec.constraints.identity_classes = groups_from(j.at("identity_classes"));
    spec.constraints.unidimensional = j.at("unidimensional").get<bool>();
    spec.constraints.covariate_free_init = j.at("covariate_free").get<bool>();
    spec.p = j.at("p").get<int>();
    require_valid(spec);
    return spec;
  } catch (const json::exception& e) {
    throw ParseError(std::string("model spec: ") + e.what());
  }
}

json params_to_json(const ParamSet& params, const ModelSpec& spec) {
  json j;
  if (spec.items.mode == ItemMode::Unconstrained) {
    j["lambda"] = matrix_json(params.item.lambda);
  } else {
    j["xi"] = matrix_json(params.support.xi);
    j["beta"] = vector_json(params.item.beta);
    j["gamma"] = vector_json(params.item.gamma);
  }
  j["phi"] = matrix_json(params.chain.phi);
  json pis = json::array();
  for (const auto& m : params.chain.pi) pis.push_back(matrix_json(m));
  j["pi"] = pis;
  return j;
}

ParamSet params_from_json(const json& j, const ModelSpec& spec) {
  try {
    ParamSet p = zero_params(spec);
    if (spec.items.mode == ItemMode::Unconstrained) {
      p.item.lambda = matrix_from(j.at("lambda"), spec.items.J, spec.k, "lambda");
    } else {
      p.support.xi = matrix_from(j.at("xi"), spec.k, effective_dims(spec), "xi");
      p.item.beta = vector_from(j.at("beta"), spec.items.J, "beta");
      p.item.gamma = vector_from(j.at("gamma"), spec.items.J, "gamma");
    }
    p.chain.phi = matrix_from(j.at("phi"), spec.k - 1, effective_covariates(spec), "phi");
    const auto& pis = j.at("pi");
    if (pis.size() != p.chain.pi.size()) throw ParseError("pi: expected one matrix per equality class");
    for (std::size_t m = 0; m < pis.size(); ++m) p.chain.pi[m] = matrix_from(pis[m], spec.k, spec.k, "pi");
    return p;
  } catch (const json::exception& e) {
    throw ParseError(std::string("parameters: ") + e.what());
  }
}

json fit_to_json(const FitResult& fit, const ModelConfig& cfg, const Dataset& data, const FitOptions& opts) {
  json j;
  j["label"] = cfg.label;
  j["model"] = spec_to_json(cfg.spec);
  json cov = json::array();
  for (const auto& c : cfg.covariates) cov.push_back(c);
  j["covariates"] = cov;
  j["data"] = {{"n", data.n()}, {"total_trials", data.total_trials()}, {"fingerprint", hex64(fingerprint(data))}};
  j["options"] = {{"starts", opts.n_starts}, {"seed", opts.seed}, {"tol", opts.tol}, {"max_iter", opts.max_iter}};
  j["loglik"] = fit.loglik;
  j["g"] = fit.g;
  j["bic"] = -2.0 * fit.loglik + fit.g * std::log(static_cast<double>(data.n()));
  j["bic_star"] = -2.0 * fit.loglik + fit.g * std::log(static_cast<double>(data.total_trials()));
  j["n_iter"] = fit.n_iter;
  j["converged"] = fit.converged;
  j["best_start"] = fit.best_start + 1;
  json starts = json::array();
  for (double l : fit.start_logliks) {
    if (std::isfinite(l)) starts.push_back(l);
    else starts.push_back(nullptr);
  }
  j["start_logliks"] = starts;
  j["warnings"] = fit.warnings;
  j["params"] = params_to_json(fit.params, cfg.spec);
  return j;
}

}  // namespace lmirt
