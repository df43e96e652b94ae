#include "doctest.h"

#include <algorithm>

#include "lmirt/model_spec.hpp"
#include "support.hpp"
#include "tables.hpp"

using namespace lmirt;

namespace {

bool has_message(const std::vector<SpecError>& errs, const std::string& needle) {
  return std::any_of(errs.begin(), errs.end(), [&](const SpecError& e) { return e.message.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("count_free_params: k sweep") {
  CHECK(count_free_params(tables::k_sweep(1)) == 4);
  CHECK(count_free_params(tables::k_sweep(2)) == 26);
  CHECK(count_free_params(tables::k_sweep(3)) == 64);
  CHECK(count_free_params(tables::k_sweep(4)) == 118);
}

TEST_CASE("count_free_params: constraint lattice") {
  CHECK(count_free_params(tables::lattice({{0, 1}})) == 58);
  CHECK(count_free_params(tables::lattice({{0, 1}, {4, 5}})) == 52);
  CHECK(count_free_params(tables::lattice({{2, 3}, {4, 5}, {6, 7}})) == 46);
  CHECK(count_free_params(tables::lattice({{0, 1}, {2, 3}, {4, 5}, {6, 7}})) == 40);
  CHECK(count_free_params(tables::identity_row(0)) == 34);
  CHECK(count_free_params(tables::identity_row(6)) == 34);
}

TEST_CASE("count_free_params: item parameterisations") {
  CHECK(count_free_params(tables::parameterisation(ItemMode::OnePL, true)) == 34);
  CHECK(count_free_params(tables::parameterisation(ItemMode::OnePL, false)) == 36);
  CHECK(count_free_params(tables::parameterisation(ItemMode::TwoPL, true)) == 37);
  CHECK(count_free_params(tables::parameterisation(ItemMode::TwoPL, false)) == 38);
}

TEST_CASE("every reference row's count is reproduced") {
  for (const auto& row : tables::all_rows()) {
    INFO(row.label);
    CHECK(validate(row.spec).empty());
    CHECK(count_free_params(row.spec) == row.g);
  }
}

TEST_CASE("k = 1 has no chain parameters whatever p is") {
  for (int p = 1; p <= 4; ++p) CHECK(count_free_params(oracle::unconstrained_spec(1, 4, 8, p)) == 4);
}

TEST_CASE("property: adding constraints never increases g") {
  Rng rng(11);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + rng.integer(4);
    const auto mode = static_cast<ItemMode>(rng.integer(3));
    ModelSpec base = oracle::two_dim_spec(mode, k, 8, 1 + rng.integer(3));
    const int g0 = count_free_params(base);

    // Merge two random classes.
    ModelSpec m = base;
    auto& cls = m.constraints.equality_classes;
    const int a = rng.integer(static_cast<int>(cls.size()));
    int b = rng.integer(static_cast<int>(cls.size()));
    if (a != b) {
      cls[a].insert(cls[a].end(), cls[b].begin(), cls[b].end());
      cls.erase(cls.begin() + b);
    }
    REQUIRE(validate(m).empty());
    CHECK(count_free_params(m) <= g0);

    // Identity on a class.
    ModelSpec id = m;
    id.constraints.identity_classes.push_back(id.constraints.equality_classes.front());
    REQUIRE(validate(id).empty());
    CHECK(count_free_params(id) <= count_free_params(m));

    // Drop covariates.
    ModelSpec nc = m;
    nc.constraints.covariate_free_init = true;
    CHECK(count_free_params(nc) <= count_free_params(m));

    // Unidimensional. With one state the 2PL count frees the second reference
    // item's pair and so grows; the rule holds from k = 2 on.
    if (mode != ItemMode::Unconstrained && !(mode == ItemMode::TwoPL && k == 1)) {
      ModelSpec uni = m;
      uni.constraints.unidimensional = true;
      REQUIRE(validate(uni).empty());
      CHECK(count_free_params(uni) <= count_free_params(m));
    }
  }
}

TEST_CASE("validate: benchmark bidimensional layout is accepted") {
  auto s = tables::parameterisation(ItemMode::TwoPL, false);
  CHECK(validate(s).empty());
  CHECK(effective_dims(s) == 2);
  CHECK(ability_column(s, 1) == 0);
  CHECK(ability_column(s, 3) == 1);
  CHECK(is_reference_item(s, 0));
  CHECK(is_reference_item(s, 2));
  CHECK_FALSE(is_reference_item(s, 3));
}

TEST_CASE("validate: unassigned item is named") {
  auto s = oracle::two_dim_spec(ItemMode::TwoPL, 3, 8, 2);
  s.items.dim_of = {0, 0, 1};
  CHECK(has_message(validate(s), "item 4 unassigned"));
  s.items.dim_of = {0, 0, 1, -1};
  CHECK(has_message(validate(s), "item 4 unassigned"));
  CHECK_THROWS_AS(require_valid(s), std::invalid_argument);
}

TEST_CASE("validate: identity group must be an equality class") {
  auto s = oracle::unconstrained_spec(3, 4, 8, 2);
  s.constraints.identity_classes = {{0, 1}};
  CHECK(has_message(validate(s), "identity constraint on {1,2} which is not an equality class"));
}

TEST_CASE("validate: structural errors") {
  auto s = oracle::unconstrained_spec(3, 4, 8, 2);
  s.constraints.equality_classes.pop_back();
  CHECK(has_message(validate(s), "regime 8 in no class"));

  s = oracle::unconstrained_spec(3, 4, 8, 2);
  s.constraints.equality_classes[0].push_back(1);
  CHECK(has_message(validate(s), "regime 2 in several classes"));

  s = oracle::two_dim_spec(ItemMode::OnePL, 3, 8, 2);
  s.items.reference_item = {0, 1};
  CHECK(has_message(validate(s), "does not belong"));

  s = oracle::unconstrained_spec(3, 4, 8, 2);
  s.constraints.unidimensional = true;
  CHECK_FALSE(validate(s).empty());

  s = oracle::unconstrained_spec(0, 4, 8, 2);
  CHECK_FALSE(validate(s).empty());
}

TEST_CASE("mode names round-trip") {
  for (auto m : {ItemMode::Unconstrained, ItemMode::OnePL, ItemMode::TwoPL}) CHECK(parse_item_mode(to_string(m)) == m);
  CHECK(parse_item_mode("rasch") == ItemMode::OnePL);
  CHECK_THROWS(parse_item_mode("3pl"));
}

TEST_CASE("unidimensional keeps only the first reference") {
  auto s = tables::parameterisation(ItemMode::TwoPL, true);
  CHECK(effective_reference_items(s) == std::vector<int>{0});
  CHECK(ability_column(s, 3) == 0);
  CHECK_FALSE(is_reference_item(s, 2));
}
