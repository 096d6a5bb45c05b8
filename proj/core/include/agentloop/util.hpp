#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

namespace agentloop {

// -- hashing / encoding ------------------------------------------------------

std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);
// Throws Error(SchemaMismatch) on malformed input.
std::string base64_decode(std::string_view data);

// -- string helpers ----------------------------------------------------------

std::string_view trim_view(std::string_view s);
std::string trim(std::string_view s);
std::string to_lower(std::string_view s);
// Collapses runs of whitespace to single spaces and trims the ends.
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
bool starts_with(std::string_view s, std::string_view prefix);

// -- filesystem --------------------------------------------------------------

// Throw Error(IoError) on failure; contents are treated as raw bytes.
std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view contents);
// Writes to a sibling temp file then renames, so readers never see a torn
// file.  Creates parent directories as needed.
void atomic_write_file(const std::filesystem::path& path, std::string_view contents);
std::filesystem::path make_temp_dir(std::string_view prefix);

// -- seeding -----------------------------------------------------------------

// Derives a stream-specific 64-bit seed from a base seed and a label, so
// per-item RNG streams stay stable regardless of scheduling order.
std::uint64_t mix_seed(std::uint64_t base, std::string_view label);

// -- work scheduling ---------------------------------------------------------

// Runs fn(i) for i in [0, count) on up to `workers` threads.  Results are
// ordered by index at the call sites, so parallelism never changes output.
// The first exception thrown by any worker is rethrown after join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

}  // namespace agentloop
