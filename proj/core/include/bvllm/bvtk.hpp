#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "bvllm/tensor.hpp"

// BVTK binary tensor files:
//
//   offset  size        field
//   0       5           magic "BVTK1" (42 56 54 4B 31)
//   5       1           dtype: 0 = f32, 1 = f64
//   6       1           ndim
//   7       8 * ndim    dims, u64 little-endian
//   ...     payload     row-major elements, little-endian
//
// The loader checks magic, dtype, that the payload length matches the dims
// exactly, and that every element is finite.
namespace bvllm::bvtk {

enum class DType : std::uint8_t { f32 = 0, f64 = 1 };

std::vector<std::uint8_t> encode(const Tensor& tensor, DType dtype = DType::f64);
// Throws FormatError on malformed input.
Tensor decode(std::span<const std::uint8_t> bytes, const std::string& source = "<memory>");

// Throw IoError when the file cannot be read or written, FormatError when
// its contents are malformed.
Tensor load(const std::filesystem::path& path);
void save(const std::filesystem::path& path, const Tensor& tensor, DType dtype = DType::f64);

}  // namespace bvllm::bvtk
