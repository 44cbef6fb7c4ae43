#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace fireset {

inline constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ull;
inline constexpr std::uint64_t kFnvPrime = 0x100000001b3ull;

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h = kFnvOffset);
std::uint64_t fnv1a64_file(const std::filesystem::path& path);

template <typename T>
std::uint64_t fnv1a64_vec(const std::vector<T>& v, std::uint64_t h = kFnvOffset) {
  return fnv1a64(v.data(), v.size() * sizeof(T), h);
}

std::string hex64(std::uint64_t h);

}  // namespace fireset
