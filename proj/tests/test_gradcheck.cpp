#include <doctest.h>

#include <set>

#include <json.hpp>

#include "pyconv/config.hpp"
#include "pyconv/gradcheck.hpp"

using namespace pyconv;

TEST_CASE("relative error") {
  CHECK(relative_error(1.0, 1.0, 1e-4) == 0.0);
  CHECK(relative_error(1.0, 1.1, 1e-4) == doctest::Approx(0.1 / 1.1));
  CHECK(relative_error(0.0, 1e-9, 1e-4) == doctest::Approx(1e-5));
}

TEST_CASE("every op passes") {
  const auto reports = check_ops({});
  CHECK(reports.size() >= 15);
  for (const auto& r : reports) {
    INFO(r.subject << " max rel error " << r.max_rel_error);
    CHECK(r.passed);
    CHECK(r.max_rel_error <= 1e-5);
    CHECK(r.checked() > 0);
    if (r.subject == "linear") CHECK(r.max_rel_error < 1e-8);
  }
}

TEST_CASE("corrupted gradients fail") {
  GradCheckOptions o;
  o.corrupt = true;
  for (const auto& r : check_ops(o)) {
    INFO(r.subject);
    CHECK_FALSE(r.passed);
  }
}

TEST_CASE("toy classification network passes") {
  const auto toy = toy_scale(default_config(Task::classification));
  CHECK(toy.config.num_classes == 5);
  CHECK(toy.input == Dims{2, 3, 64, 64});
  GradCheckOptions o;
  o.samples_per_tensor = 1;
  const auto r = check_network(build_network(toy.config), toy.input, o);
  INFO("worst " << r.worst_tensor << " " << r.max_rel_error);
  CHECK(r.passed);
  CHECK(r.max_rel_error <= 1e-5);

  const auto j = nlohmann::json::parse(r.to_json());
  CHECK(j.at("precision") == "float64");
  CHECK(j.at("threshold") == 1e-5);
  CHECK(j.at("passed") == true);
  CHECK(j.contains("max_rel_error"));
  CHECK(j.contains("epsilon"));
  CHECK(j.at("tensors").size() == r.tensors.size());
}

TEST_CASE("suite covers every task") {
  const auto suite = toy_gradcheck_suite();
  CHECK(suite.size() == 9);
  std::set<Task> tasks;
  for (const auto& t : suite) tasks.insert(t.config.task);
  CHECK(tasks.size() == 4);
}
