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

#include "scensim/error.hpp"

#include <nlohmann/json.hpp>

#include <charconv>
#include <cctype>
#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>

namespace scensim {

enum class Tag { real, integer, boolean, label, region };

inline std::string_view tag_name(Tag tag) {
    switch (tag) {
    case Tag::real: return "real";
    case Tag::integer: return "integer";
    case Tag::boolean: return "boolean";
    case Tag::label: return "label";
    case Tag::region: return "region";
    }
    return "?";
}

inline Tag parse_tag(std::string_view name) {
    if (name == "real") return Tag::real;
    if (name == "integer") return Tag::integer;
    if (name == "boolean") return Tag::boolean;
    if (name == "label") return Tag::label;
    if (name == "region") return Tag::region;
    throw ParseError("unknown attribute tag '" + std::string(name) + "'");
}

/// Shortest decimal text that parses back to exactly `v`.
inline std::string format_real(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, end);
}

/// Whole-string decimal parse; surrounding whitespace allowed.
inline std::optional<double> parse_real(std::string_view text) {
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.front()))) text.remove_prefix(1);
    while (!text.empty() && std::isspace(static_cast<unsigned char>(text.back()))) text.remove_suffix(1);
    if (!text.empty() && text.front() == '+') text.remove_prefix(1);
    double v = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (text.empty() || ec != std::errc() || ptr != text.data() + text.size()) return std::nullopt;
    return v;
}

inline bool is_numeric(Tag tag) { return tag == Tag::real || tag == Tag::integer; }

/// Categorical value such as an occupation or status name.
struct Label {
    std::string text;
    friend auto operator<=>(const Label&, const Label&) = default;
};

struct RegionId {
    std::string text;
    friend auto operator<=>(const RegionId&, const RegionId&) = default;
};

/// Tagged attribute value. Values of different tags never compare equal and
/// ordering comparisons between them throw TagError.
class AttributeValue {
public:
    using Storage = std::variant<double, std::int64_t, bool, Label, RegionId>;

    AttributeValue() : storage_(0.0) {}
    explicit AttributeValue(Storage storage) : storage_(std::move(storage)) {}

    static AttributeValue real(double v) { return AttributeValue(Storage(v)); }
    static AttributeValue integer(std::int64_t v) { return AttributeValue(Storage(v)); }
    static AttributeValue boolean(bool v) { return AttributeValue(Storage(v)); }
    static AttributeValue label(std::string v) { return AttributeValue(Storage(Label{std::move(v)})); }
    static AttributeValue region(std::string v) { return AttributeValue(Storage(RegionId{std::move(v)})); }

    Tag tag() const { return static_cast<Tag>(storage_.index()); }
    const Storage& storage() const { return storage_; }

    double as_real() const { return get<double>(Tag::real); }
    std::int64_t as_integer() const { return get<std::int64_t>(Tag::integer); }
    bool as_bool() const { return get<bool>(Tag::boolean); }
    const std::string& as_label() const { return get<Label>(Tag::label).text; }
    const std::string& as_region() const { return get<RegionId>(Tag::region).text; }

    /// Real or integer value widened to double.
    double numeric() const {
        if (auto* d = std::get_if<double>(&storage_)) return *d;
        if (auto* i = std::get_if<std::int64_t>(&storage_)) return static_cast<double>(*i);
        throw TagError("value of tag " + std::string(tag_name(tag())) + " is not numeric");
    }

    std::string to_string() const {
        return std::visit(
            [](const auto& v) -> std::string {
                using T = std::decay_t<decltype(v)>;
                if constexpr (std::is_same_v<T, double>) return nlohmann::json(v).dump();
                else if constexpr (std::is_same_v<T, std::int64_t>) return std::to_string(v);
                else if constexpr (std::is_same_v<T, bool>) return v ? "true" : "false";
                else return v.text;
            },
            storage_);
    }

    friend bool operator==(const AttributeValue&, const AttributeValue&) = default;

private:
    template <typename T>
    const T& get(Tag expected) const {
        if (auto* p = std::get_if<T>(&storage_)) return *p;
        throw TagError("expected " + std::string(tag_name(expected)) + " value, found " +
                       std::string(tag_name(tag())));
    }

    Storage storage_;
};

/// Three-way comparison of same-tag values. Booleans and strings order
/// naturally; callers restrict ordering operators to numeric tags.
inline std::partial_ordering compare_values(const AttributeValue& a, const AttributeValue& b) {
    if (a.tag() != b.tag()) {
        throw TagError("cannot compare " + std::string(tag_name(a.tag())) + " with " +
                       std::string(tag_name(b.tag())));
    }
    return std::visit(
        [&](const auto& lhs) -> std::partial_ordering {
            using T = std::decay_t<decltype(lhs)>;
            return lhs <=> std::get<T>(b.storage());
        },
        a.storage());
}

/// Tag guessed from JSON syntax alone: integral numbers are integers, strings
/// are labels. Use coerce() once the declared tag is known.
inline AttributeValue value_from_json(const nlohmann::json& j) {
    if (j.is_boolean()) return AttributeValue::boolean(j.get<bool>());
    if (j.is_number_integer()) return AttributeValue::integer(j.get<std::int64_t>());
    if (j.is_number_float()) return AttributeValue::real(j.get<double>());
    if (j.is_string()) return AttributeValue::label(j.get<std::string>());
    throw ParseError("attribute value must be a number, boolean or string, got " + j.dump());
}

/// Lossless conversion to the declared tag: integer to real, label to region.
/// Returns nullopt when the value cannot represent the tag.
inline std::optional<AttributeValue> coerce(const AttributeValue& v, Tag target) {
    if (v.tag() == target) return v;
    if (target == Tag::real && v.tag() == Tag::integer) return AttributeValue::real(v.numeric());
    if (target == Tag::integer && v.tag() == Tag::real) {
        double d = v.as_real();
        if (std::isfinite(d) && std::trunc(d) == d && std::abs(d) < 9.0e15)
            return AttributeValue::integer(static_cast<std::int64_t>(d));
        return std::nullopt;
    }
    if (target == Tag::region && v.tag() == Tag::label) return AttributeValue::region(v.as_label());
    if (target == Tag::label && v.tag() == Tag::region) return AttributeValue::label(v.as_region());
    return std::nullopt;
}

inline void to_json(nlohmann::json& j, const AttributeValue& v) {
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, Label> || std::is_same_v<T, RegionId>) j = x.text;
            else j = x;
        },
        v.storage());
}

} // namespace scensim
