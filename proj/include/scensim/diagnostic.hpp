/*
 * Copyright 2026 The scensim Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <nlohmann/json.hpp>

#include <string>
#include <vector>

namespace scensim {

/// A validation finding. `code` is a stable kebab-case identifier such as
/// "unknown-attribute"; `location` is a path into the offending document.
struct Diagnostic {
    std::string code;
    std::string message;
    std::string location;

    friend bool operator==(const Diagnostic&, const Diagnostic&) = default;
};

using Diagnostics = std::vector<Diagnostic>;

inline void to_json(nlohmann::json& j, const Diagnostic& d) {
    j = nlohmann::json{{"code", d.code}, {"message", d.message}, {"location", d.location}};
}

inline void append(Diagnostics& into, Diagnostics from) {
    into.insert(into.end(), std::make_move_iterator(from.begin()),
                std::make_move_iterator(from.end()));
}

inline std::size_t count_code(const Diagnostics& ds, const std::string& code) {
    std::size_t n = 0;
    for (const auto& d : ds) n += (d.code == code);
    return n;
}

} // namespace scensim
