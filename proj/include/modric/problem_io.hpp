#pragma once

// JSON serialization of problems. Matrices are row-major nested arrays,
// vectors are flat arrays and infinite bounds are written as null.

#include <optional>
#include <string>

#include "json.hpp"
#include "modric/asqp.hpp"

namespace modric {

nlohmann::json to_json(const UftocProblem& p);
nlohmann::json to_json(const CftocProblem& p);

UftocProblem uftoc_from_json(const nlohmann::json& j);
CftocProblem cftoc_from_json(const nlohmann::json& j);

nlohmann::json matrix_to_json(const Matrix& m);
nlohmann::json vector_to_json(const Vector& v);
Matrix matrix_from_json(const nlohmann::json& j, Index rows, Index cols, const char* what);
/// `null_value` replaces null entries; without it null is an error.
Vector vector_from_json(const nlohmann::json& j, Index size, const char* what,
                        std::optional<double> null_value = std::nullopt);

nlohmann::json read_json_file(const std::string& path);
void write_json_file(const nlohmann::json& j, const std::string& path);

}  // namespace modric
