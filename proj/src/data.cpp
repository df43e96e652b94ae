#include "lmirt/data.hpp"

#include <cstring>

namespace lmirt {

std::size_t Dataset::total_trials() const {
  std::size_t total = 0;
  for (const auto& s : subjects) total += s.trials.size();
  return total;
}

std::vector<std::string> check_dataset(const Dataset& data, const ModelSpec& spec) {
  std::vector<std::string> errors;
  for (const auto& s : data.subjects) {
    const std::string who = "subject " + s.id + ": ";
    if (s.trials.empty()) errors.push_back(who + "no trials");
    if (s.x.size() != spec.p)
      errors.push_back(who + "covariate vector has length " + std::to_string(s.x.size()) + ", model expects " +
                       std::to_string(spec.p));
    for (std::size_t t = 0; t < s.trials.size(); ++t) {
      const Trial& tr = s.trials[t];
      const std::string at = who + "occasion " + std::to_string(t + 1) + ": ";
      if (tr.item < 0 || tr.item >= spec.items.J) errors.push_back(at + "unknown item type " + std::to_string(tr.item + 1));
      if (tr.response != 0 && tr.response != 1) errors.push_back(at + "response must be 0 or 1");
      if (t > 0 && (tr.regime < 0 || tr.regime >= spec.regimes))
        errors.push_back(at + "regime " + std::to_string(tr.regime + 1) + " out of range");
    }
  }
  return errors;
}

Eigen::VectorXd design_vector(const SubjectRecord& subject, const ModelSpec& spec) {
  if (spec.constraints.covariate_free_init) return Eigen::VectorXd::Ones(1);
  return subject.x;
}

namespace {

struct Fnv {
  std::uint64_t h = 1469598103934665603ULL;
  void bytes(const void* p, std::size_t n) {
    const auto* c = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= c[i];
      h *= 1099511628211ULL;
    }
  }
  template <class T>
  void value(const T& v) {
    bytes(&v, sizeof(T));
  }
};

}  // namespace

std::uint64_t fingerprint(const Dataset& data) {
  Fnv f;
  for (const auto& s : data.subjects) {
    f.bytes(s.id.data(), s.id.size());
    for (const auto& t : s.trials) {
      f.value(t.item);
      f.value(t.regime);
      f.value(t.response);
    }
  }
  return f.h;
}

}  // namespace lmirt
