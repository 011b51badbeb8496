#include "neurodx/resources.hpp"

#include "neurodx/error.hpp"

namespace neurodx::resources {

std::string_view get(std::string_view name) {
  const auto& table = all();
  auto it = table.find(name);
  if (it == table.end()) throw Error(ErrorCode::MalformedFile, "no built-in resource", std::string(name));
  return it->second;
}

}  // namespace neurodx::resources
