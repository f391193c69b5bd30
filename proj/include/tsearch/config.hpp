#pragma once

#include "tsearch/domain.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace tsearch {

/// Reads a SearchConfig from a JSON object whose keys mirror the field
/// names. Missing keys keep their defaults; unknown keys are rejected.
/// The result is validated.
SearchConfig config_from_json(const nlohmann::json& j, SearchConfig base = {});
SearchConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const SearchConfig& config);

}  // namespace tsearch
