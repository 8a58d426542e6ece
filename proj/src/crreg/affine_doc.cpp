#include "crreg/affine_doc.hpp"

#include <fstream>

#include <json.hpp>

#include "crreg/common.hpp"

namespace crreg {

using nlohmann::json;

namespace {

json mat_to_json(const Mat4& m) {
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m[r * 4 + c]);
    rows.push_back(row);
  }
  return rows;
}

Mat4 mat_from_json(const json& j) {
  Mat4 m{};
  if (!j.is_array() || j.size() != 4) fail(Status::format_error, "bad matrix in document");
  for (int r = 0; r < 4; ++r) {
    if (!j[r].is_array() || j[r].size() != 4)
      fail(Status::format_error, "bad matrix row in document");
    for (int c = 0; c < 4; ++c) m[r * 4 + c] = j[r][c].get<double>();
  }
  return m;
}

std::array<double, 3> triple(const json& j, const char* key) {
  if (!j.contains(key) || !j[key].is_array() || j[key].size() != 3)
    fail(Status::format_error, std::string("missing parameter group ") + key);
  return {j[key][0].get<double>(), j[key][1].get<double>(), j[key][2].get<double>()};
}

}  // namespace

void save_affine_document(const std::string& path, const AffineParams& params,
                          const Mat4& world_mm, const AffineDocMeta& meta) {
  json doc;
  doc["schema_version"] = 1;
  doc["params"] = {{"t", params.t}, {"r", params.r}, {"s", params.s}, {"k", params.k}};
  doc["matrix_normalized"] = mat_to_json(build_matrix(params));
  doc["matrix_world_mm"] = mat_to_json(world_mm);
  doc["metadata"] = {{"metric", meta.metric},
                     {"scales", meta.scales},
                     {"iters", meta.iters},
                     {"seed", meta.seed},
                     {"tool_version", meta.tool_version}};
  std::ofstream f(path);
  if (!f) fail(Status::io_error, "cannot open " + path + " for writing");
  f << doc.dump(2) << "\n";
  if (!f) fail(Status::io_error, "failed writing " + path);
}

AffineDocument load_affine_document(const std::string& path) {
  std::ifstream f(path);
  if (!f) fail(Status::io_error, "cannot open " + path);
  json doc;
  try {
    f >> doc;
  } catch (const json::exception& e) {
    fail(Status::format_error, std::string("invalid affine document: ") + e.what());
  }
  AffineDocument out;
  if (!doc.contains("params")) fail(Status::format_error, "affine document lacks params");
  const json& p = doc["params"];
  out.params.t = triple(p, "t");
  out.params.r = triple(p, "r");
  out.params.s = triple(p, "s");
  out.params.k = triple(p, "k");
  out.matrix_normalized = doc.contains("matrix_normalized")
                              ? mat_from_json(doc["matrix_normalized"])
                              : build_matrix(out.params);
  out.matrix_world_mm = doc.contains("matrix_world_mm")
                            ? mat_from_json(doc["matrix_world_mm"])
                            : out.matrix_normalized;
  if (doc.contains("metadata")) {
    const json& m = doc["metadata"];
    out.meta.metric = m.value("metric", "");
    out.meta.seed = m.value("seed", "");
    out.meta.tool_version = m.value("tool_version", "");
    if (m.contains("scales")) out.meta.scales = m["scales"].get<std::vector<int>>();
    if (m.contains("iters")) out.meta.iters = m["iters"].get<std::vector<int>>();
  }
  return out;
}

}  // namespace crreg
