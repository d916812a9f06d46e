#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <sstream>

#include "pyconv/commands.hpp"
#include "pyconv/weight_io.hpp"

using namespace pyconv;

namespace {

WeightFile sample_file() {
  WeightFile f;
  f.add("a", random_normal<float>({2, 3, 4}, 1));
  f.add("b/c", Tensor<double>({3}, {-0.0, std::numeric_limits<double>::denorm_min(), 1e300}));
  f.add("nan", Tensor<float>({1}, {std::numeric_limits<float>::quiet_NaN()}));
  return f;
}

}  // namespace

TEST_CASE("weight file round trip is bit exact") {
  const WeightFile f = sample_file();
  const std::string bytes = encode_weights(f);
  const WeightFile g = decode_weights(bytes);
  REQUIRE(g.tensors.size() == 3);
  CHECK(encode_weights(g) == bytes);
  CHECK(std::get<Tensor<float>>(g.tensors[0].second) == std::get<Tensor<float>>(f.tensors[0].second));
  const auto& d = std::get<Tensor<double>>(g.tensors[1].second);
  CHECK(std::signbit(d[0]));
  CHECK(d[1] == std::numeric_limits<double>::denorm_min());
  CHECK(std::isnan(std::get<Tensor<float>>(g.tensors[2].second)[0]));
  CHECK(as_tensor<double>(*g.find("a")).dims() == Dims{2, 3, 4});
  CHECK(g.find("missing") == nullptr);
}

TEST_CASE("malformed weight files report the failing offset") {
  const std::string bytes = encode_weights(sample_file());
  // "PYCV" + version + count + name length + "a" + dtype + rank + 3 extents.
  const std::size_t data_at = 4 + 4 + 4 + 4 + 1 + 1 + 1 + 3 * 8;
  try {
    decode_weights(std::string_view(bytes).substr(0, data_at + 10));
    FAIL("no throw");
  } catch (const WeightFormatError& e) {
    CHECK(e.offset() == data_at);
    CHECK(std::string(e.what()).find("truncated tensor data") != std::string::npos);
  }
  std::string bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_WITH(decode_weights(bad), doctest::Contains("bad magic"));
  std::string version = bytes;
  version[4] = 9;
  CHECK_THROWS_WITH(decode_weights(version), doctest::Contains("unsupported version"));
  CHECK_THROWS_WITH(decode_weights(bytes + "x"), doctest::Contains("trailing bytes"));
  std::string dtype = bytes;
  dtype[4 + 4 + 4 + 4 + 1] = 7;
  CHECK_THROWS_WITH(decode_weights(dtype), doctest::Contains("unknown dtype"));
  CHECK_THROWS_AS(decode_weights(""), WeightFormatError);
}

TEST_CASE("load_into checks names and shapes") {
  ParamStore<float> store;
  store.add("a", Tensor<float>({2, 3, 4}));
  load_into(sample_file(), store);
  CHECK(store.get("a") == std::get<Tensor<float>>(sample_file().tensors[0].second));
  ParamStore<float> wrong;
  wrong.add("a", Tensor<float>({4, 3, 2}));
  CHECK_THROWS_WITH(load_into(sample_file(), wrong), doctest::Contains("wrong shape"));
  ParamStore<float> missing;
  missing.add("zz", Tensor<float>({1}));
  CHECK_THROWS_WITH(load_into(sample_file(), missing), doctest::Contains("no tensor zz"));
}

TEST_CASE("shape parsing") {
  CHECK(parse_shape("1,3,224,224") == Dims{1, 3, 224, 224});
  CHECK(parse_shape("1,3,16,112,112") == Dims{1, 3, 16, 112, 112});
  CHECK_THROWS_AS(parse_shape("1,3,x,4"), ConfigError);
  CHECK_THROWS_AS(parse_shape("1,3,0,4"), ConfigError);
  CHECK_THROWS_AS(parse_shape(""), ConfigError);
}

TEST_CASE("describe lists every stage") {
  std::ostringstream out;
  CHECK(cmd_describe({}, out) == kExitOk);
  const std::string s = out.str();
  for (const char* needle : {"stem", "stage1", "stage2", "stage3", "stage4", "56x56", "7x7", "9x9, 16, G=16", "(x3)",
                             "logits"}) {
    INFO(needle);
    CHECK(s.find(needle) != std::string::npos);
  }
}

TEST_CASE("analyze exit codes") {
  CliOptions o;
  o.expect = "table1";
  std::ostringstream out;
  CHECK(cmd_analyze(o, out) == kExitOk);
  CHECK(out.str().find("golden check passed") != std::string::npos);

  o.expect = "table9";
  CHECK_THROWS(cmd_analyze(o, out));

  CliOptions plain;
  plain.json = true;
  std::ostringstream js;
  CHECK(cmd_analyze(plain, js) == kExitOk);
  CHECK(js.str().find("\"total_params\"") != std::string::npos);
}

TEST_CASE("config file errors") {
  const auto path = std::filesystem::temp_directory_path() / "pyconv_cli_bad_config.json";
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs(R"({"depth": 34})", f);
    std::fclose(f);
  }
  CliOptions o;
  o.config_path = path.string();
  std::ostringstream out;
  CHECK_THROWS_WITH(cmd_describe(o, out), doctest::Contains("depth"));
  std::filesystem::remove(path);
  o.config_path = "/nonexistent/config.json";
  CHECK_THROWS(cmd_describe(o, out));
}
