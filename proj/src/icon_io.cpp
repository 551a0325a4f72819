#include "evicon/icon_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "evicon/error.hpp"

namespace evicon::icon {

json stroke_to_json(const Stroke& stroke) {
  json points = json::array();
  for (const Point& p : stroke.points) points.push_back({p.x, p.y});
  return {{"points", std::move(points)}, {"width", stroke.width}};
}

Stroke stroke_from_json(const json& j) {
  if (!j.is_object() || !j.contains("points") || !j["points"].is_array()) {
    throw Error("invalid_icon", "stroke must be an object with a 'points' array");
  }
  Stroke s;
  if (j.contains("width")) {
    if (!j["width"].is_number()) throw Error("invalid_icon", "stroke width must be a number");
    s.width = j["width"].get<double>();
  }
  for (const auto& p : j["points"]) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_number() || !p[1].is_number()) {
      throw Error("invalid_icon", "stroke point must be [x, y]");
    }
    s.points.push_back({p[0].get<double>(), p[1].get<double>()});
  }
  return s;
}

json icon_to_json(const VectorIcon& icon) {
  json strokes = json::array();
  for (const Stroke& s : icon.strokes) strokes.push_back(stroke_to_json(s));
  return {{"id", icon.id}, {"tags", icon.tags}, {"strokes", std::move(strokes)}};
}

VectorIcon icon_from_json(const json& j) {
  if (!j.is_object()) throw Error("invalid_icon", "icon must be a JSON object");
  std::string id;
  if (j.contains("id")) {
    if (!j["id"].is_string()) throw Error("invalid_icon", "icon id must be a string");
    id = j["id"].get<std::string>();
  }
  if (!j.contains("tags") || !j["tags"].is_array()) throw Error("invalid_icon", "icon needs a 'tags' array");
  std::vector<std::string> tags;
  for (const auto& t : j["tags"]) {
    if (!t.is_string()) throw Error("invalid_icon", "tags must be strings");
    tags.push_back(t.get<std::string>());
  }
  std::vector<Stroke> strokes;
  if (j.contains("strokes")) {
    if (!j["strokes"].is_array()) throw Error("invalid_icon", "'strokes' must be an array");
    for (const auto& s : j["strokes"]) strokes.push_back(stroke_from_json(s));
  }
  return make_icon(std::move(id), std::move(tags), std::move(strokes));
}

json suggestion_to_json(const EditSuggestion& s) {
  json add = json::array();
  for (const Stroke& stroke : s.add) add.push_back(stroke_to_json(stroke));
  return {{"add", std::move(add)}, {"remove", s.remove}};
}

std::vector<VectorIcon> read_icons(std::istream& in) {
  std::vector<VectorIcon> icons;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw Error("invalid_json", "line " + std::to_string(line_no) + ": " + e.what());
    }
    icons.push_back(icon_from_json(j));
  }
  return icons;
}

std::vector<VectorIcon> read_icons(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("io_error", "cannot open " + path.string());
  return read_icons(in);
}

void write_icons(std::ostream& out, const std::vector<VectorIcon>& icons) {
  for (const auto& icon : icons) out << icon_to_json(icon).dump() << '\n';
}

void write_icons(const std::filesystem::path& path, const std::vector<VectorIcon>& icons) {
  std::ofstream out(path);
  if (!out) throw Error("io_error", "cannot write " + path.string());
  write_icons(out, icons);
}

}  // namespace evicon::icon
