#pragma once

#include <string>
#include <vector>

#include "qvl/runner.hpp"

namespace qvl {

// Flat key/value run configuration with [run], [learn] and [env] sections.
// Overrides are dotted section.key=value pairs applied after the file parse.
// Unknown sections or keys raise ConfigError naming the offender, as do
// values that fail to parse or fall outside their documented range.
RunConfig parse_config_text(const std::string& text, const std::vector<std::string>& overrides);

// Reads the file at path, then delegates to parse_config_text.
RunConfig parse_config(const std::string& path, const std::vector<std::string>& overrides);

// Renders every setting of a resolved config in file grammar, suitable both
// as the run manifest and as a defaults reference (format_config(RunConfig{})).
std::string format_config(const RunConfig& config);

}  // namespace qvl
