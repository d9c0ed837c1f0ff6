#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace streetsafe {

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes, std::uint64_t basis = 0xcbf29ce484222325ULL);

/// 16 lowercase hex digits.
std::string to_hex(std::uint64_t value);

/// Hash of a whole file's bytes; throws DataError when unreadable.
std::uint64_t hash_file(const std::filesystem::path& path);

}  // namespace streetsafe
