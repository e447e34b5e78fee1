#include <gtest/gtest.h>

#include "bvllm/error.hpp"
#include "bvllm/ops.hpp"
#include "bvllm/sampler.hpp"
#include "test_util.hpp"

namespace bvllm {
namespace {

using testing::random_tensor;

SamplerParams random_sampler(std::size_t r, std::size_t d, std::uint64_t seed) {
  Rng rng = make_rng(seed, 0);
  return SamplerParams{SpatialQueryBank{random_tensor(r, d, seed)}, AttentionStack::random(d, 2, 4, rng), {}};
}

TEST(SpatialSample, ZeroNetworkReturnsBank) {
  const SamplerParams p{SpatialQueryBank{random_tensor(3, 8, 1)}, AttentionStack::zeros(8, 2, 4), {}};
  const Tensor out = spatial_sample(random_tensor(10, 8, 2), TextContext{random_tensor(2, 8, 3)}, p);
  EXPECT_EQ(out, p.queries.embeddings);
}

TEST(SpatialSample, OutputShape) {
  const SamplerParams p = random_sampler(32, 64, 4);
  const Tensor out = spatial_sample(random_tensor(256, 64, 5), TextContext{random_tensor(3, 64, 6)}, p);
  EXPECT_EQ(out.shape(), (Shape{32, 64}));
}

TEST(SpatialSample, MoreQueriesThanTokensRejected) {
  const SamplerParams p = random_sampler(6, 8, 7);
  EXPECT_THROW(spatial_sample(random_tensor(5, 8, 8), TextContext{random_tensor(2, 8, 9)}, p), ConfigError);
}

TEST(SpatialSample, WidthMismatchIsConfigError) {
  const SamplerParams p = random_sampler(2, 8, 10);
  EXPECT_THROW(spatial_sample(random_tensor(5, 4, 11), TextContext{random_tensor(2, 4, 12)}, p), ConfigError);
}

TEST(SpatialSample, InvariantToTokenOrder) {
  const SamplerParams p = random_sampler(4, 16, 13);
  const Tensor tokens = random_tensor(12, 16, 14);
  const TextContext text{random_tensor(3, 16, 15)};
  Tensor shuffled = Tensor::zeros(12, 16);
  const std::vector<std::size_t> perm{5, 11, 0, 3, 8, 1, 10, 2, 7, 4, 9, 6};
  for (std::size_t i = 0; i < 12; ++i) std::copy(tokens.row(perm[i]).begin(), tokens.row(perm[i]).end(), shuffled.row(i).begin());
  EXPECT_LT(kernels::max_abs_diff(spatial_sample(tokens, text, p), spatial_sample(shuffled, text, p)), 1e-9);
}

TEST(SpatialSample, LearnedPositionsBreakOrderInvariance) {
  SamplerParams p = random_sampler(2, 8, 16);
  p.positions = SpatialPositions{random_tensor(2, 8, 17), random_tensor(3, 8, 18)};
  const Tensor tokens = random_tensor(6, 8, 19);
  const TextContext text{random_tensor(2, 8, 20)};
  Tensor swapped = tokens;
  std::swap_ranges(swapped.row(0).begin(), swapped.row(0).end(), swapped.row(5).begin());
  EXPECT_GT(kernels::max_abs_diff(spatial_sample(tokens, text, p), spatial_sample(swapped, text, p)), 1e-9);
  EXPECT_THROW(spatial_sample(random_tensor(7, 8, 21), text, p), ConfigError);
}

TEST(SpatialSample, BankGradientMatchesFiniteDifferences) {
  SamplerParams p = random_sampler(3, 8, 22);
  const Tensor tokens = random_tensor(6, 8, 23), text = random_tensor(2, 8, 24), w = random_tensor(3, 8, 25);
  Graph g;
  g.backward(ops::weighted_sum(spatial_sample(g.constant(tokens), g.constant(text), p), w));
  const Tensor analytic = g.grad_of(p.queries.embeddings);
  const Tensor numeric = testing::numeric_gradient(
      [&] { return testing::readout(spatial_sample(tokens, TextContext{text}, p), w); }, p.queries.embeddings);
  EXPECT_LT(testing::max_relative_error(analytic, numeric), 1e-4);
}

TEST(Project, IdentityMapLeavesTokensUnchanged) {
  const Tensor x = random_tensor(4, 6, 26);
  EXPECT_EQ(project(x, Projection::identity(6)), x);
}

TEST(Project, ZeroInputGivesBiasRows) {
  Rng rng = make_rng(27, 0);
  Projection p = Projection::random(3, 5, rng);
  p.bias = random_tensor(1, 5, 28).reshaped({5});
  const Tensor out = project(Tensor::zeros(4, 3), p);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_EQ(out(i, j), p.bias.data()[j]);
}

TEST(Project, LinearUpToBias) {
  Rng rng = make_rng(29, 0);
  Projection p = Projection::random(4, 5, rng);
  p.bias = random_tensor(1, 5, 30).reshaped({5});
  const Tensor x = random_tensor(3, 4, 31), y = random_tensor(3, 4, 32);
  Tensor xy = x;
  for (std::size_t i = 0; i < xy.size(); ++i) xy.data()[i] += y.data()[i];
  const Tensor a = project(xy, p), b = project(x, p), c = project(y, p);
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 5; ++j) EXPECT_NEAR(a(i, j) - b(i, j) - c(i, j) + p.bias.data()[j], 0.0, 1e-9);
}

TEST(Project, GradientMatchesFiniteDifferences) {
  Rng rng = make_rng(33, 0);
  Projection p = Projection::random(4, 5, rng);
  p.bias = random_tensor(1, 5, 34).reshaped({5});
  Tensor x = random_tensor(3, 4, 35);
  const Tensor w = random_tensor(3, 5, 36);
  Graph g;
  g.backward(ops::weighted_sum(project(g.param(x), p), w));
  const Tensor gx = g.grad_of(x), gw = g.grad_of(p.weight), gb = g.grad_of(p.bias);
  auto f = [&] { return testing::readout(project(x, p), w); };
  EXPECT_LT(testing::max_relative_error(gx, testing::numeric_gradient(f, x)), 1e-6);
  EXPECT_LT(testing::max_relative_error(gw, testing::numeric_gradient(f, p.weight)), 1e-6);
  EXPECT_LT(testing::max_relative_error(gb, testing::numeric_gradient(f, p.bias)), 1e-6);
}

TEST(AssembleSequence, RowCountAndBlockOrder) {
  Graph g;
  const Tensor f1 = random_tensor(3, 5, 37), f2 = random_tensor(3, 5, 38), text = random_tensor(4, 5, 39);
  const Tensor seq = assemble_sequence({g.constant(f1), g.constant(f2)}, g.constant(text), nullptr).value();
  ASSERT_EQ(seq.rows(), 10u);
  EXPECT_EQ(seq.rows_slice(0, 3), f1);
  EXPECT_EQ(seq.rows_slice(3, 6), f2);
  EXPECT_EQ(seq.rows_slice(6, 10), text);
}

TEST(AssembleSequence, EmptyFrameListIsTextOnly) {
  Graph g;
  const Tensor text = random_tensor(4, 5, 40);
  EXPECT_EQ(assemble_sequence({}, g.constant(text), nullptr).value(), text);
}

TEST(AssembleSequence, TextIsProjectedWhenWidthsDiffer) {
  Graph g;
  Rng rng = make_rng(41, 0);
  const Projection text_proj = Projection::random(3, 5, rng);
  const Tensor text = random_tensor(2, 3, 42);
  const Tensor seq =
      assemble_sequence({g.constant(random_tensor(1, 5, 43))}, g.constant(text), &text_proj).value();
  ASSERT_EQ(seq.shape(), (Shape{3, 5}));
  EXPECT_EQ(seq.rows_slice(1, 3), project(text, text_proj));
}

}  // namespace
}  // namespace bvllm
