#pragma once
// Field and report serialization.
//
// Field dump format: `<name>.json` header (grid n, component count, time_tag,
// field name, layout) plus `<name>.f64` holding raw little-endian 64-bit
// floats, component-major, each component in (i,j,k) order with k fastest.
#include <filesystem>
#include <string>

#include "ciforge/field.hpp"

namespace ciforge {

template <int NC>
void dump_field(const FieldT<NC>& f, const std::filesystem::path& dir, const std::string& name);

template <int NC>
FieldT<NC> load_field(const std::filesystem::path& dir, const std::string& name);

// Component count recorded in a dump header (to dispatch loads generically).
int dumped_components(const std::filesystem::path& dir, const std::string& name);

// Writes pretty JSON with sorted keys (deterministic bytes for equal content).
void write_json_file(const std::filesystem::path& path, const std::string& serialized);

}  // namespace ciforge
