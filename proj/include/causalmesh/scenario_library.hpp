#pragma once

#include <map>
#include <string>

namespace causalmesh {

/// Named scenarios compiled into the binary (see scenarios/*.json).
const std::map<std::string, std::string>& bundled_scenarios();

/// Returns the JSON text for a bundled name, or nullptr.
const std::string* find_bundled_scenario(const std::string& name);

}  // namespace causalmesh
