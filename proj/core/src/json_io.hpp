#pragma once

// Internal JSON (de)serialisation helpers shared by the checkpoint writers.

#include <filesystem>
#include <string>

#include <json.hpp>

#include "ceme/nnet/mlp.hpp"

namespace ceme::detail {

using nlohmann::json;

json mlp_to_json(const nnet::Mlp& net);
nnet::Mlp mlp_from_json(const json& j);

json parse_json(std::string_view text, std::string_view what);
json read_json_file(const std::filesystem::path& path);

/// Writes via a temporary sibling and rename, so readers never see a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ceme::detail
