#pragma once

#include "shrinkhs/model.hpp"

#include <json.hpp>

#include <filesystem>

namespace shrinkhs {

void to_json(nlohmann::json& j, const Hyperparams& h);
void from_json(const nlohmann::json& j, Hyperparams& h);

}  // namespace shrinkhs

namespace shrinkhs::io {

nlohmann::json to_json_array(const Vector& v);
Vector vector_from_json(const nlohmann::json& j);

nlohmann::json read_json(const std::filesystem::path& path);

/// Pretty-printed with a trailing newline. Non-finite numbers become null.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);

}  // namespace shrinkhs::io
