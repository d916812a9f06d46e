#include <doctest.h>

#include <cmath>

#include "pyconv/arch.hpp"
#include "pyconv/config.hpp"
#include "pyconv/executor.hpp"

using namespace pyconv;

namespace {

Dims stage_dims(const NetworkGraph& g, const Dims& input, const std::string& stage) {
  const auto shapes = g.infer_shapes(input);
  for (const StageInfo& s : g.stages()) {
    if (s.name == stage) return shapes.at(static_cast<std::size_t>(s.output_node));
  }
  FAIL("no stage " << stage);
  return {};
}

Dims output_dims(const NetworkGraph& g, const Dims& input, const std::string& name) {
  const auto shapes = g.infer_shapes(input);
  for (const auto& [n, id] : g.outputs()) {
    if (n == name) return shapes.at(static_cast<std::size_t>(id));
  }
  FAIL("no output " << name);
  return {};
}

}  // namespace

TEST_CASE("blocks per depth") {
  CHECK(blocks_for_depth(50) == std::array<int, 4>{3, 4, 6, 3});
  CHECK(blocks_for_depth(101) == std::array<int, 4>{3, 4, 23, 3});
  CHECK(blocks_for_depth(152) == std::array<int, 4>{3, 8, 36, 3});
  CHECK_THROWS(blocks_for_depth(34));
}

TEST_CASE("classification stage extents") {
  for (Family f : {Family::resnet_baseline, Family::pyconvresnet, Family::pyconvhgresnet}) {
    const auto g = build_classification_net(f, 50);
    const Dims in{1, 3, 224, 224};
    CHECK(stage_dims(g, in, "stage1") == Dims{1, 256, 56, 56});
    CHECK(stage_dims(g, in, "stage2") == Dims{1, 512, 28, 28});
    CHECK(stage_dims(g, in, "stage3") == Dims{1, 1024, 14, 14});
    CHECK(stage_dims(g, in, "stage4") == Dims{1, 2048, 7, 7});
    CHECK(output_dims(g, in, "logits") == Dims{1, 1000});
  }
}

TEST_CASE("stage pyramids follow the level schedule") {
  const auto g = build_classification_net(Family::pyconvresnet, 50);
  std::vector<std::size_t> levels;
  for (const PyConvSpec* s : g.pyconv_specs()) levels.push_back(s->levels.size());
  REQUIRE(levels.size() == 16);
  const std::vector<std::size_t> expect{4, 4, 4, 3, 3, 3, 3, 2, 2, 2, 2, 2, 2, 1, 1, 1};
  CHECK(levels == expect);
  CHECK(g.pyconv_specs()[3]->levels[2].groups == 8);
}

TEST_CASE("single-level schedule costs the same as the baseline") {
  const auto base = build_classification_net(Family::resnet_baseline, 50);
  const auto flat = build_classification_net(Family::pyconvresnet, 50, {1, 1, 1, 1});
  CHECK(flat.param_count() == base.param_count());
  CHECK(base.param_count() == 25557032);
}

TEST_CASE("parameter count grows with depth") {
  const auto a = build_classification_net(Family::pyconvresnet, 50).param_count();
  const auto b = build_classification_net(Family::pyconvresnet, 101).param_count();
  const auto c = build_classification_net(Family::pyconvresnet, 152).param_count();
  CHECK(a < b);
  CHECK(b < c);
}

TEST_CASE("block checks") {
  BlockSpec b;
  b.name = "b";
  b.in_channels = 64;
  b.width = 64;
  b.out_channels = 256;
  b.spatial = make_pyconv2d(64, 64, {3, 5}, 1);
  b.shortcut = ShortcutKind::projection;
  CHECK_NOTHROW(check_block(b));
  b.spatial = make_pyconv2d(64, 32, {3, 5}, 1);
  CHECK_THROWS_WITH(check_block(b), doctest::Contains("width to width"));
  b.spatial = make_pyconv2d(64, 64, {3, 5}, 1);
  b.plain_spatial = true;
  CHECK_THROWS_WITH(check_block(b), doctest::Contains("one level"));
}

TEST_CASE("segmentation outputs and global context pool") {
  SegmentationOptions o;
  o.backbone.width_divisor = 8;
  o.num_classes = 7;
  const auto g = build_pyconvsegnet(o);
  const Dims in{1, 3, 65, 65};
  CHECK(output_dims(g, in, "main") == Dims{1, 7, 65, 65});
  CHECK(output_dims(g, in, "aux") == Dims{1, 7, 65, 65});
  CHECK(stage_dims(g, in, "stage4")[2] == 9);

  const auto full = build_pyconvsegnet(50, 150, 8);
  const auto shapes = full.infer_shapes({1, 3, 473, 473});
  bool found = false;
  for (const LayerNode& n : full.nodes()) {
    if (n.kind == NodeKind::adaptive_avgpool) {
      found = true;
      const Dims& d = shapes.at(static_cast<std::size_t>(n.id));
      CHECK(d[2] == 9);
      CHECK(d[3] == 9);
    }
  }
  CHECK(found);
  CHECK(output_dims(full, {1, 3, 473, 473}, "main") == Dims{1, 150, 473, 473});
}

TEST_CASE("SSD head map sides and channels") {
  const auto g = build_pyconvssd(50, 81);
  const Dims in{1, 3, 300, 300};
  const std::vector<std::int64_t> sides{38, 19, 10, 5, 3, 1};
  const std::vector<std::int64_t> boxes{4, 6, 6, 6, 4, 4};
  std::int64_t total = 0;
  for (std::size_t m = 0; m < sides.size(); ++m) {
    const Dims loc = output_dims(g, in, "loc" + std::to_string(m));
    const Dims conf = output_dims(g, in, "conf" + std::to_string(m));
    CHECK(loc == Dims{1, boxes[m] * 4, sides[m], sides[m]});
    CHECK(conf == Dims{1, boxes[m] * 81, sides[m], sides[m]});
    total += boxes[m] * sides[m] * sides[m];
  }
  CHECK(total == 8732);
  CHECK(output_dims(g, in, "loc0")[1] == 16);
}

TEST_CASE("video network temporal extents") {
  const auto g = build_pyconvresnet3d(50);
  const Dims in{1, 3, 16, 224, 224};
  CHECK(stage_dims(g, in, "stage2")[2] == 16);
  CHECK(stage_dims(g, in, "stage3") == Dims{1, 1024, 8, 14, 14});
  CHECK(stage_dims(g, in, "stage4") == Dims{1, 2048, 4, 7, 7});
  CHECK(output_dims(g, in, "logits") == Dims{1, 400});
  CHECK(build_resnet3d(50).param_count() > g.param_count());
}

TEST_CASE("config round trip and errors") {
  for (Task t : {Task::classification, Task::segmentation, Task::detection, Task::video}) {
    const auto c = default_config(t);
    CHECK(parse_config(config_to_json(c)) == c);
  }
  CHECK_THROWS_WITH(parse_config(R"({"depth": 34})"), doctest::Contains("depth"));
  CHECK_THROWS_AS(parse_config("{not json"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"family": "vgg"})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"level_schedule": [4, 3, 2]})"), ConfigError);
  CHECK_THROWS_AS(parse_config(R"({"input_shape": [1, 3, 0, 224]})"), ConfigError);
}

TEST_CASE("shape inference names the failing node") {
  const auto g = build_classification_net(Family::pyconvresnet, 50);
  CHECK_THROWS_AS(g.infer_shapes({1, 4, 224, 224}), ShapeError);
}

TEST_CASE("graph is a DAG in insertion order") {
  const auto g = build_classification_net(Family::pyconvhgresnet, 50);
  for (const LayerNode& n : g.nodes()) {
    for (int i : n.inputs) CHECK(i < n.id);
  }
}

TEST_CASE("executor forward is deterministic and matches inferred shapes") {
  ModelConfig c = default_config(Task::classification);
  c.width_divisor = 8;
  c.num_classes = 10;
  c.input_shape = {2, 3, 32, 32};
  const auto g = build_network(c);
  const auto params = init_params<float>(g, 5);
  auto b1 = init_buffers<float>(g);
  auto b2 = init_buffers<float>(g);
  const auto x = random_normal<float>(c.input_shape, 6);
  Executor<float> e1(g, params, b1);
  Executor<float> e2(g, params, b2);
  const RunOptions train{true, 9, true};
  const auto o1 = e1.forward(x, train);
  const auto o2 = e2.forward(x, train);
  CHECK(o1.at("logits") == o2.at("logits"));
  CHECK(b1 == b2);
  CHECK(o1.at("logits").dims() == Dims{2, 10});
  const auto shapes = g.infer_shapes(c.input_shape);
  for (const LayerNode& n : g.nodes()) CHECK(e1.activation(n.id).dims() == shapes[static_cast<std::size_t>(n.id)]);

  const auto eval = e1.forward(x);
  for (float v : eval.at("logits").data()) CHECK(std::isfinite(v));
}
