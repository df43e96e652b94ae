#include "lmirt/model_spec.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <stdexcept>

namespace lmirt {

std::string to_string(ItemMode mode) {
  switch (mode) {
    case ItemMode::Unconstrained: return "unconstrained";
    case ItemMode::OnePL: return "1pl";
    case ItemMode::TwoPL: return "2pl";
  }
  return "unknown";
}

ItemMode parse_item_mode(const std::string& text) {
  std::string t = text;
  std::transform(t.begin(), t.end(), t.begin(), [](unsigned char ch) { return std::tolower(ch); });
  if (t == "unconstrained") return ItemMode::Unconstrained;
  if (t == "1pl" || t == "rasch" || t == "one_pl") return ItemMode::OnePL;
  if (t == "2pl" || t == "two_pl") return ItemMode::TwoPL;
  throw std::invalid_argument("unknown item mode '" + text + "'");
}

ConstraintSet ConstraintSet::singletons(int regimes) {
  ConstraintSet c;
  for (int r = 0; r < regimes; ++r) c.equality_classes.push_back({r});
  return c;
}

namespace {

std::vector<int> sorted_copy(std::vector<int> v) {
  std::sort(v.begin(), v.end());
  return v;
}

}  // namespace

std::vector<SpecError> validate(const ModelSpec& spec) {
  std::vector<SpecError> errors;
  auto fail = [&errors](std::string field, std::string message) {
    errors.push_back({std::move(field), std::move(message)});
  };

  if (spec.k < 1) fail("k", "state count must be at least 1");
  if (spec.s < 1) fail("s", "dimension count must be at least 1");
  if (spec.p < 1) fail("p", "covariate vector must contain at least the intercept");
  if (spec.regimes < 1) fail("regimes", "regime count must be at least 1");

  const ItemBank& bank = spec.items;
  if (bank.J < spec.s) fail("items.J", "item count must be at least the dimension count");
  if (static_cast<int>(bank.dim_of.size()) != bank.J) {
    for (int j = static_cast<int>(bank.dim_of.size()); j < bank.J; ++j)
      fail("items.dim_of", "item " + std::to_string(j + 1) + " unassigned");
  }
  std::vector<int> per_dim(std::max(spec.s, 0), 0);
  for (int j = 0; j < std::min<int>(bank.J, bank.dim_of.size()); ++j) {
    const int d = bank.dim_of[j];
    if (d < 0) {
      fail("items.dim_of", "item " + std::to_string(j + 1) + " unassigned");
    } else if (d >= spec.s) {
      fail("items.dim_of", "item " + std::to_string(j + 1) + " assigned to dimension " +
                               std::to_string(d + 1) + " beyond s=" + std::to_string(spec.s));
    } else {
      ++per_dim[d];
    }
  }
  for (int d = 0; d < spec.s; ++d) {
    if (per_dim[d] == 0) fail("items.dim_of", "dimension " + std::to_string(d + 1) + " has no items");
  }

  if (bank.mode != ItemMode::Unconstrained) {
    if (static_cast<int>(bank.reference_item.size()) != spec.s) {
      fail("items.reference_item", "expected one reference item per dimension");
    } else {
      for (int d = 0; d < spec.s; ++d) {
        const int j = bank.reference_item[d];
        if (j < 0 || j >= bank.J || j >= static_cast<int>(bank.dim_of.size()) || bank.dim_of[j] != d) {
          fail("items.reference_item", "reference item for dimension " + std::to_string(d + 1) +
                                           " does not belong to that dimension");
        }
      }
    }
  } else if (spec.constraints.unidimensional) {
    fail("constraints.unidimensional", "unidimensionality requires the 1PL or 2PL parameterisation");
  }

  // Equality classes must partition the regimes.
  std::vector<int> seen(std::max(spec.regimes, 0), 0);
  for (const auto& cls : spec.constraints.equality_classes) {
    if (cls.empty()) fail("constraints.equality_classes", "empty equality class");
    for (int r : cls) {
      if (r < 0 || r >= spec.regimes) {
        fail("constraints.equality_classes", "regime " + std::to_string(r + 1) + " out of range");
      } else {
        ++seen[r];
      }
    }
  }
  for (int r = 0; r < spec.regimes; ++r) {
    if (seen[r] == 0) fail("constraints.equality_classes", "regime " + std::to_string(r + 1) + " in no class");
    if (seen[r] > 1) fail("constraints.equality_classes", "regime " + std::to_string(r + 1) + " in several classes");
  }

  std::set<std::vector<int>> classes;
  for (const auto& cls : spec.constraints.equality_classes) classes.insert(sorted_copy(cls));
  for (const auto& group : spec.constraints.identity_classes) {
    if (!classes.count(sorted_copy(group))) {
      std::ostringstream os;
      os << "identity constraint on {";
      for (std::size_t i = 0; i < group.size(); ++i) os << (i ? "," : "") << group[i] + 1;
      os << "} which is not an equality class";
      fail("constraints.identity_classes", os.str());
    }
  }
  return errors;
}

void require_valid(const ModelSpec& spec) {
  const auto errors = validate(spec);
  if (errors.empty()) return;
  std::string msg = "invalid model spec:";
  for (const auto& e : errors) msg += "\n  " + e.field + ": " + e.message;
  throw std::invalid_argument(msg);
}

int effective_dims(const ModelSpec& spec) { return spec.constraints.unidimensional ? 1 : spec.s; }

int effective_covariates(const ModelSpec& spec) { return spec.constraints.covariate_free_init ? 1 : spec.p; }

int ability_column(const ModelSpec& spec, int j) {
  return spec.constraints.unidimensional ? 0 : spec.items.dim_of[j];
}

std::vector<int> effective_reference_items(const ModelSpec& spec) {
  if (spec.items.mode == ItemMode::Unconstrained) return {};
  if (spec.constraints.unidimensional) return {spec.items.reference_item.front()};
  return spec.items.reference_item;
}

bool is_reference_item(const ModelSpec& spec, int j) {
  const auto refs = effective_reference_items(spec);
  return std::find(refs.begin(), refs.end(), j) != refs.end();
}

std::vector<int> class_of_regime(const ModelSpec& spec) {
  std::vector<int> out(spec.regimes, -1);
  const auto& classes = spec.constraints.equality_classes;
  for (std::size_t c = 0; c < classes.size(); ++c)
    for (int r : classes[c])
      if (r >= 0 && r < spec.regimes) out[r] = static_cast<int>(c);
  return out;
}

std::vector<bool> identity_class_flags(const ModelSpec& spec) {
  const auto& classes = spec.constraints.equality_classes;
  std::vector<bool> flags(classes.size(), false);
  for (const auto& group : spec.constraints.identity_classes) {
    const auto key = sorted_copy(group);
    for (std::size_t c = 0; c < classes.size(); ++c)
      if (sorted_copy(classes[c]) == key) flags[c] = true;
  }
  return flags;
}

int count_free_params(const ModelSpec& spec) {
  const int k = spec.k;
  const int J = spec.items.J;
  int g = (k - 1) * effective_covariates(spec);

  const auto identity = identity_class_flags(spec);
  const int free_classes = static_cast<int>(std::count(identity.begin(), identity.end(), false));
  g += free_classes * k * (k - 1);

  const int s_eff = effective_dims(spec);
  switch (spec.items.mode) {
    case ItemMode::Unconstrained:
      g += J * k;
      break;
    case ItemMode::OnePL:
      g += k * s_eff + (J - s_eff);
      break;
    case ItemMode::TwoPL:
      g += k * s_eff + 2 * (J - s_eff);
      break;
  }
  return g;
}

}  // namespace lmirt
