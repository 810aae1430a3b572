#pragma once

#include "csbrm/core.hpp"

#include <json.hpp>

#include <string>
#include <vector>

namespace csbrm::json_io {

using Json = nlohmann::ordered_json;

Json to_json(const Vec& v);
/// {"rows": r, "cols": c, "data": [row-major]}
Json to_json(const Mat& m);
Json to_json(const std::vector<Vec>& vs);

/// Readers take the field path used in error messages.
Vec vec_from_json(const Json& j, const std::string& path);
Mat mat_from_json(const Json& j, const std::string& path);
std::vector<Vec> vecs_from_json(const Json& j, const std::string& path);

/// Stable formatting used for every artifact: two-space indent, trailing newline.
std::string dump(const Json& j);

Json read_file(const std::string& path);
void write_file(const std::string& path, const Json& j);

}  // namespace csbrm::json_io
