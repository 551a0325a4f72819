#pragma once

#include <filesystem>
#include <iosfwd>
#include <vector>

#include "evicon/icon_model.hpp"
#include "json.hpp"

namespace evicon::icon {

using nlohmann::json;

// Icon file format: JSON lines, one {"id","tags","strokes":[{"points","width"}]}
// object per line.

json stroke_to_json(const Stroke& stroke);
Stroke stroke_from_json(const json& j);

json icon_to_json(const VectorIcon& icon);
/// Parses and validates; throws evicon::Error("invalid_icon") on bad input.
VectorIcon icon_from_json(const json& j);

json suggestion_to_json(const EditSuggestion& s);

std::vector<VectorIcon> read_icons(std::istream& in);
std::vector<VectorIcon> read_icons(const std::filesystem::path& path);
void write_icons(std::ostream& out, const std::vector<VectorIcon>& icons);
void write_icons(const std::filesystem::path& path, const std::vector<VectorIcon>& icons);

}  // namespace evicon::icon
