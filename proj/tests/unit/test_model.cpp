/*
 * Copyright 2026 The macs-lab Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "macs/error.hpp"
#include "macs/gradcheck.hpp"
#include "macs/model.hpp"
#include "macs/objectives.hpp"
#include "macs/ops.hpp"
#include "test_util.hpp"

using namespace macs;
using test::random_tensor;
using test::to_vec;

namespace {

ModelSpec dense_spec(std::size_t in, std::size_t hidden, std::size_t out) {
  ModelSpec s;
  s.input_shape = {in};
  s.layers = {{LayerKind::kDense, in, hidden, 0}, {LayerKind::kRelu}, {LayerKind::kDense, hidden, out, 0}};
  return s;
}

void zero_params(Model& m) {
  for (auto& p : m.params())
    for (auto& v : p.value.mutable_data()) v = 0.0;
}

}  // namespace

TEST(Model, SameSeedBitwiseEqual) {
  const ModelSpec spec = make_preset("mlp", {1, 6, 6}, 4);
  const Model a = Model::init(spec, 3);
  const Model b = Model::init(spec, 3);
  const Model c = Model::init(spec, 4);
  ASSERT_EQ(a.params().size(), b.params().size());
  for (std::size_t i = 0; i < a.params().size(); ++i)
    EXPECT_EQ(to_vec(a.params()[i].value), to_vec(b.params()[i].value));
  EXPECT_NE(to_vec(a.params()[0].value), to_vec(c.params()[0].value));
}

TEST(Model, DenseParamShapes) {
  ModelSpec s;
  s.input_shape = {4};
  s.layers = {{LayerKind::kDense, 4, 3, 0}};
  const Model m = Model::init(s, 0);
  ASSERT_EQ(m.params().size(), 2u);
  EXPECT_EQ(m.params()[0].name, "layers.0.weight");
  EXPECT_EQ(m.params()[0].value.shape(), (Shape{3, 4}));
  EXPECT_EQ(m.params()[1].value.shape(), (Shape{3}));
  for (double v : m.params()[1].value.data()) EXPECT_EQ(v, 0.0);
}

TEST(Model, HeInitVariance) {
  // fan_in 8: Var = 2/8 = 0.25.
  ModelSpec s;
  s.input_shape = {8};
  s.layers = {{LayerKind::kDense, 8, 12500, 0}};
  const Model m = Model::init(s, 1);
  const auto w = m.params()[0].value.data();
  ASSERT_EQ(w.size(), 100000u);
  double mu = 0.0;
  for (double v : w) mu += v;
  mu /= static_cast<double>(w.size());
  double var = 0.0;
  for (double v : w) var += (v - mu) * (v - mu);
  var /= static_cast<double>(w.size() - 1);
  EXPECT_NEAR(var, 0.25, 0.25 * 0.05);
}

TEST(Model, Presets) {
  EXPECT_EQ(make_preset("linear", {5}, 3).layers.size(), 1u);
  const ModelSpec mlp = make_preset("mlp", {1, 4, 4}, 10);
  EXPECT_EQ(mlp.layer_output_shapes().back(), (Shape{10}));
  const ModelSpec cnn = make_preset("tinycnn", {3, 8, 8}, 5);
  EXPECT_EQ(cnn.layer_output_shapes().back(), (Shape{5}));
  EXPECT_EQ(cnn.num_classes(), 5u);
  EXPECT_THROW(make_preset("resnet", {3, 8, 8}, 5), ConfigError);
}

TEST(Model, IncompatibleLayersRejected) {
  ModelSpec s;
  s.input_shape = {4};
  s.layers = {{LayerKind::kDense, 5, 3, 0}};
  EXPECT_THROW(Model::init(s, 0), ConfigError);
}

TEST(Model, ZeroWeightsGiveZeroLogits) {
  Model m = Model::init(make_preset("mlp", {6}, 3), 0);
  zero_params(m);
  for (double v : to_vec(m.forward(random_tensor({4, 6}, 1), false))) EXPECT_EQ(v, 0.0);
}

TEST(Model, BatchIndependence) {
  const Model m = Model::init(make_preset("tinycnn", {1, 8, 8}, 3), 2);
  const Tensor x = random_tensor({5, 1, 8, 8}, 3);
  const Tensor all = m.forward(x, false);
  for (std::size_t i = 0; i < 5; ++i) {
    std::vector<double> row(x.data().begin() + i * 64, x.data().begin() + (i + 1) * 64);
    const Tensor one = m.forward(Tensor::from({1, 1, 8, 8}, row), false);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(one[k], all[i * 3 + k]);
  }
}

TEST(Model, HandSetTwoTwoTwo) {
  Model m = Model::init(dense_spec(2, 2, 2), 0);
  auto set = [&](std::size_t i, std::vector<double> v) {
    auto d = m.params()[i].value.mutable_data();
    std::copy(v.begin(), v.end(), d.begin());
  };
  set(0, {1, -1, 2, 0.5});
  set(1, {0, -3});
  set(2, {1, 1, -1, 2});
  set(3, {0.5, 0});
  // x = (2, 1): h = relu((1, 1.5)) = (1, 1.5); logits = (1+1.5+0.5, -1+3) = (3, 2).
  // x = (1, 3): pre = (-2, 0.5) -> h = (0, 0.5); logits = (1.0, 1.0).
  const Tensor y = m.forward(Tensor::from({2, 2}, {2, 1, 1, 3}), false);
  EXPECT_EQ(to_vec(y), (std::vector<double>{3, 2, 1, 1}));
}

TEST(Model, ForwardCounter) {
  const Model m = Model::init(dense_spec(3, 4, 2), 0);
  m.forward(random_tensor({2, 3}, 0));
  m.forward(random_tensor({2, 3}, 1), false);
  EXPECT_EQ(m.forward_count(), 2u);
}

TEST(Model, InputShapeChecked) {
  const Model m = Model::init(dense_spec(3, 4, 2), 0);
  EXPECT_THROW(m.forward(Tensor::zeros({2, 4})), DimensionError);
}

TEST(Model, FullModelGradcheck) {
  const Model m = Model::init(make_preset("tinycnn", {1, 6, 6}, 3), 5);
  const Tensor x = random_tensor({2, 1, 6, 6}, 6);
  const std::vector<int> y{0, 2};
  std::vector<Tensor> params;
  for (const auto& p : m.params()) params.push_back(p.value);
  const auto res = gradcheck([&](const std::vector<Tensor>&) { return cross_entropy(m.forward(x), y); },
                             params);
  EXPECT_LT(res.max_rel_error, 1e-4);
}

TEST(Model, CopyIsDeep) {
  Model a = Model::init(dense_spec(2, 2, 2), 0);
  Model b = a;
  b.params()[0].value.mutable_data()[0] += 1.0;
  EXPECT_NE(a.params()[0].value[0], b.params()[0].value[0]);
}

class Checkpoint : public ::testing::Test {
 protected:
  test::TempDir dir{"ckpt"};
};

TEST_F(Checkpoint, RoundTripBitwise) {
  const Model m = Model::init(make_preset("tinycnn", {1, 8, 8}, 4), 9);
  const auto path = dir / "m.ckpt";
  save_checkpoint(m, path);
  const Model r = load_checkpoint(path);
  EXPECT_EQ(r.spec(), m.spec());
  EXPECT_EQ(r.seed(), 9u);
  const Tensor x = random_tensor({3, 1, 8, 8}, 1);
  EXPECT_EQ(to_vec(r.forward(x, false)), to_vec(m.forward(x, false)));
}

TEST_F(Checkpoint, FileSizeIsHeaderPlusPayload) {
  const Model m = Model::init(make_preset("mlp", {5}, 3), 0);
  const auto path = dir / "m.ckpt";
  save_checkpoint(m, path);
  // 5*256+256 + 256*128+128 + 128*3+3
  EXPECT_EQ(m.param_count(), 1536u + 32896u + 387u);
  EXPECT_EQ(std::filesystem::file_size(path), checkpoint_header_bytes(m) + 8 * m.param_count());
}

TEST_F(Checkpoint, TruncatedPayloadIsFormatError) {
  const Model m = Model::init(make_preset("linear", {4}, 2), 0);
  const auto path = dir / "m.ckpt";
  save_checkpoint(m, path);
  std::filesystem::resize_file(path, std::filesystem::file_size(path) - 8);
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST_F(Checkpoint, TrailingBytesAreFormatError) {
  const Model m = Model::init(make_preset("linear", {4}, 2), 0);
  const auto path = dir / "m.ckpt";
  save_checkpoint(m, path);
  std::ofstream(path, std::ios::binary | std::ios::app).put('x');
  EXPECT_THROW(load_checkpoint(path), FormatError);
}

TEST_F(Checkpoint, BadMagicIsFormatError) {
  test::write_bytes(dir / "bad.ckpt", {'N', 'O', 'T', 'M', 'A', 'C', 'S', '!', 0, 0, 0, 0, 0, 0, 0, 0});
  EXPECT_THROW(load_checkpoint(dir / "bad.ckpt"), FormatError);
}

TEST_F(Checkpoint, MissingFile) { EXPECT_THROW(load_checkpoint(dir / "none.ckpt"), Error); }
