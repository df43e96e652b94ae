#pragma once

#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "lmirt/data.hpp"
#include "lmirt/em_estimator.hpp"
#include "lmirt/model_spec.hpp"
#include "lmirt/simulator.hpp"

namespace lmirt {

using json = nlohmann::ordered_json;

class ParseError : public std::runtime_error {
 public:
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Model config: `key = value` lines, `#` comments. Keys:
//   label, states, dimensions, items, item_dimensions (1-based dimension per
//   item), mode (unconstrained | 1pl | 2pl), reference_items (one per
//   dimension), regimes, equal ("1 2; 5 6"), identity ("1 2"), unidimensional,
//   covariates (covariate-file columns after the intercept), covariate_free.
struct ModelConfig {
  std::string label;
  ModelSpec spec;
  std::vector<std::string> covariates;
};

ModelConfig parse_model_config(std::istream& in, const std::string& source = "<model>");
ModelConfig read_model_config(const std::filesystem::path& path);
std::string format_model_config(const ModelConfig& config);

// Long format, one trial per row, header `subject_id,occasion,item_type,regime,response`;
// regime is empty on occasion 1. Covariates file: `subject_id,<name>,...`.
Dataset read_dataset(const std::filesystem::path& data_path, const std::filesystem::path& covariates_path,
                     const ModelConfig& config);
Dataset parse_dataset(std::istream& data, const std::string& data_source, std::istream* covariates,
                      const std::string& cov_source, const ModelConfig& config);

void write_dataset(const Dataset& data, const std::filesystem::path& data_path,
                   const std::filesystem::path& covariates_path);
void write_paths(const Dataset& data, const std::vector<std::vector<int>>& paths, const std::filesystem::path& path);

json spec_to_json(const ModelSpec& spec);
ModelSpec spec_from_json(const json& j);
json params_to_json(const ParamSet& params, const ModelSpec& spec);
ParamSet params_from_json(const json& j, const ModelSpec& spec);

json fit_to_json(const FitResult& fit, const ModelConfig& config, const Dataset& data, const FitOptions& opts);

std::string format_double(double v, int digits = 17);
std::string hex64(std::uint64_t v);

}  // namespace lmirt
