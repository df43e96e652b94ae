#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "lmirt/model_spec.hpp"

namespace lmirt {

struct Trial {
  int item = 0;
  int regime = -1;  // regime of the step into this occasion; -1 on the first occasion
  int response = 0;
};

struct SubjectRecord {
  std::string id;
  Eigen::VectorXd x;  // covariates with the intercept first
  std::vector<Trial> trials;
};

struct Dataset {
  std::vector<SubjectRecord> subjects;
  std::vector<std::string> covariate_names;  // excluding the intercept

  std::size_t n() const { return subjects.size(); }
  std::size_t total_trials() const;
};

std::vector<std::string> check_dataset(const Dataset& data, const ModelSpec& spec);

// Covariate vector actually used for the initial-state logit.
Eigen::VectorXd design_vector(const SubjectRecord& subject, const ModelSpec& spec);

// FNV-1a digest of subject ids, item/regime design and responses. Covariates
// are excluded since models may select different covariate columns.
std::uint64_t fingerprint(const Dataset& data);

}  // namespace lmirt
