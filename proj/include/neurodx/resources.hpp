#pragma once

#include <functional>
#include <map>
#include <string>
#include <string_view>

// Files from resources/ compiled into the library, keyed by relative path
// (e.g. "templates/standard.json").
namespace neurodx::resources {

const std::map<std::string, std::string_view, std::less<>>& all();

// Throws Error(MalformedFile) when the resource does not exist.
std::string_view get(std::string_view name);

}  // namespace neurodx::resources
