#pragma once

#include <iosfwd>

namespace bvllm::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 1;
inline constexpr int kExitIo = 2;

// Entry point of the `bvllm` tool. Diagnostics go to `err` as a single line.
int main(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace bvllm::cli
