#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "bvllm/config.hpp"
#include "bvllm/tensor.hpp"

namespace bvllm {

// Parsed from "4,8,16x4,8,16,32": frames-to-select values, then spatial
// token counts.
struct SweepGrid {
  std::vector<std::size_t> frames_to_select;
  std::vector<std::size_t> tokens_per_frame;

  static SweepGrid parse(std::string_view spec);
  std::size_t size() const { return frames_to_select.size() * tokens_per_frame.size(); }
};

struct SweepOptions {
  SweepGrid grid{{4, 8, 16}, {4, 8, 16, 32}};
  std::size_t theta = 2048;
  std::size_t train_steps = 300;  // selector training per frames_to_select value
  std::size_t eval_size = 16;
  std::uint64_t seed = 0;
  std::size_t frames = 40;
  std::size_t tokens = 64;  // body tokens M, at least the largest R
  std::size_t dim = 32;
  std::size_t planted = 4;
};

struct SweepRow {
  std::size_t frames_to_select = 0;
  std::size_t tokens_per_frame = 0;
  double frame_accuracy = 0;    // hard picks landing on a planted frame
  double planted_recall = 0;    // distinct planted frames picked / min(planted, L*)
  double spatial_fidelity = 0;  // body energy inside the span of the final tokens
  double accuracy = 0;          // planted_recall * spatial_fidelity
  std::size_t tokens_pre_budget = 0;  // L* * R
  std::size_t tokens_budget_cap = 0;  // min(L* * R, theta)
  double mean_final_tokens = 0;
};

struct SweepReport {
  SweepOptions options;
  std::vector<SweepRow> rows;
  // Plain-language notes on whether accuracy rises with R at each L*.
  std::vector<std::string> observations;

  std::string to_json() const;
  std::string to_table() const;
};

// Trains one selector per frames_to_select value on the planted-frame task,
// then evaluates every grid point on one fixed synthetic evaluation set.
SweepReport sweep(const SweepOptions& options);

// Fraction of the squared norm of `rows` that lies in the row span of
// `basis` (modified Gram-Schmidt).
double span_energy_fraction(const Tensor& rows, const Tensor& basis);

}  // namespace bvllm
