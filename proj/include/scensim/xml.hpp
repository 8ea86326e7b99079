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

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scensim::xml {

/// Element tree produced by parse(). Character data directly inside an
/// element is concatenated into `text`; mixed-content ordering is dropped.
struct Element {
    std::string name;
    std::vector<std::pair<std::string, std::string>> attributes;
    std::vector<Element> children;
    std::string text;

    /// Name without namespace prefix ("y:NodeLabel" -> "NodeLabel").
    std::string_view local_name() const {
        auto pos = name.find(':');
        return pos == std::string::npos ? std::string_view(name) : std::string_view(name).substr(pos + 1);
    }

    const std::string* attribute(std::string_view key) const {
        for (const auto& [k, v] : attributes)
            if (k == key) return &v;
        return nullptr;
    }

    std::vector<const Element*> children_named(std::string_view local) const {
        std::vector<const Element*> out;
        for (const auto& c : children)
            if (c.local_name() == local) out.push_back(&c);
        return out;
    }
};

inline void append_utf8(std::string& out, std::uint32_t cp) {
    if (cp < 0x80) {
        out += static_cast<char>(cp);
    } else if (cp < 0x800) {
        out += static_cast<char>(0xC0 | (cp >> 6));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else if (cp < 0x10000) {
        out += static_cast<char>(0xE0 | (cp >> 12));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    } else {
        out += static_cast<char>(0xF0 | (cp >> 18));
        out += static_cast<char>(0x80 | ((cp >> 12) & 0x3F));
        out += static_cast<char>(0x80 | ((cp >> 6) & 0x3F));
        out += static_cast<char>(0x80 | (cp & 0x3F));
    }
}

namespace detail {

class Reader {
public:
    explicit Reader(std::string_view text) : s_(text) {}

    Element document() {
        skip_misc();
        if (at_end() || peek() != '<') fail("expected root element");
        Element root = element();
        skip_misc();
        if (!at_end()) fail("content after root element");
        return root;
    }

private:
    std::string_view s_;
    std::size_t pos_ = 0;

    [[noreturn]] void fail(const std::string& what) const {
        std::size_t line = 1;
        for (std::size_t i = 0; i < pos_ && i < s_.size(); ++i) line += (s_[i] == '\n');
        throw ParseError("malformed XML at line " + std::to_string(line) + ": " + what);
    }

    bool at_end() const { return pos_ >= s_.size(); }
    char peek() const { return s_[pos_]; }
    bool starts_with(std::string_view p) const { return s_.substr(pos_, p.size()) == p; }

    void expect(std::string_view p) {
        if (!starts_with(p)) fail("expected '" + std::string(p) + "'");
        pos_ += p.size();
    }

    void skip_ws() {
        while (!at_end() && (peek() == ' ' || peek() == '\t' || peek() == '\n' || peek() == '\r')) ++pos_;
    }

    void skip_until(std::string_view terminator) {
        auto end = s_.find(terminator, pos_);
        if (end == std::string_view::npos) fail("unterminated construct, missing '" + std::string(terminator) + "'");
        pos_ = end + terminator.size();
    }

    void skip_doctype() {
        expect("<!DOCTYPE");
        int depth = 0;
        while (!at_end()) {
            char c = s_[pos_++];
            if (c == '[') ++depth;
            else if (c == ']') --depth;
            else if (c == '>' && depth == 0) return;
        }
        fail("unterminated DOCTYPE");
    }

    // Whitespace, comments, processing instructions and DOCTYPE.
    void skip_misc() {
        for (;;) {
            skip_ws();
            if (starts_with("<?")) skip_until("?>");
            else if (starts_with("<!--")) skip_until("-->");
            else if (starts_with("<!DOCTYPE")) skip_doctype();
            else return;
        }
    }

    static bool name_char(char c) {
        return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_' ||
               c == ':' || c == '-' || c == '.' || static_cast<unsigned char>(c) >= 0x80;
    }

    std::string name() {
        std::size_t start = pos_;
        while (!at_end() && name_char(peek())) ++pos_;
        if (pos_ == start) fail("expected a name");
        char first = s_[start];
        if ((first >= '0' && first <= '9') || first == '-' || first == '.') fail("invalid name start");
        return std::string(s_.substr(start, pos_ - start));
    }

    void entity(std::string& out) {
        expect("&");
        auto semi = s_.find(';', pos_);
        if (semi == std::string_view::npos || semi - pos_ > 10) fail("unterminated entity reference");
        std::string_view ref = s_.substr(pos_, semi - pos_);
        pos_ = semi + 1;
        if (ref == "lt") out += '<';
        else if (ref == "gt") out += '>';
        else if (ref == "amp") out += '&';
        else if (ref == "quot") out += '"';
        else if (ref == "apos") out += '\'';
        else if (ref.size() > 1 && ref[0] == '#') {
            std::uint32_t cp = 0;
            bool hex = ref[1] == 'x';
            std::string_view digits = ref.substr(hex ? 2 : 1);
            if (digits.empty()) fail("empty character reference");
            for (char c : digits) {
                int d;
                if (c >= '0' && c <= '9') d = c - '0';
                else if (hex && c >= 'a' && c <= 'f') d = c - 'a' + 10;
                else if (hex && c >= 'A' && c <= 'F') d = c - 'A' + 10;
                else fail("bad character reference");
                cp = cp * (hex ? 16 : 10) + static_cast<std::uint32_t>(d);
                if (cp > 0x10FFFF) fail("character reference out of range");
            }
            append_utf8(out, cp);
        } else {
            fail("unknown entity '&" + std::string(ref) + ";'");
        }
    }

    std::string attribute_value() {
        if (at_end() || (peek() != '"' && peek() != '\'')) fail("expected quoted attribute value");
        char quote = s_[pos_++];
        std::string out;
        while (!at_end() && peek() != quote) {
            if (peek() == '<') fail("'<' in attribute value");
            if (peek() == '&') entity(out);
            else out += s_[pos_++];
        }
        if (at_end()) fail("unterminated attribute value");
        ++pos_;
        return out;
    }

    Element element() {
        expect("<");
        Element el;
        el.name = name();
        for (;;) {
            std::size_t before = pos_;
            skip_ws();
            if (at_end()) fail("unterminated start tag <" + el.name + ">");
            if (starts_with("/>")) {
                pos_ += 2;
                return el;
            }
            if (peek() == '>') {
                ++pos_;
                break;
            }
            if (pos_ == before) fail("expected whitespace before attribute");
            std::string key = name();
            skip_ws();
            expect("=");
            skip_ws();
            if (el.attribute(key)) fail("duplicate attribute '" + key + "'");
            el.attributes.emplace_back(std::move(key), attribute_value());
        }
        content(el);
        return el;
    }

    void content(Element& el) {
        for (;;) {
            if (at_end()) fail("missing end tag </" + el.name + ">");
            if (starts_with("</")) {
                pos_ += 2;
                std::string closing = name();
                if (closing != el.name) fail("end tag </" + closing + "> does not match <" + el.name + ">");
                skip_ws();
                expect(">");
                return;
            }
            if (starts_with("<!--")) skip_until("-->");
            else if (starts_with("<![CDATA[")) {
                pos_ += 9;
                auto end = s_.find("]]>", pos_);
                if (end == std::string_view::npos) fail("unterminated CDATA section");
                el.text.append(s_.substr(pos_, end - pos_));
                pos_ = end + 3;
            } else if (starts_with("<?")) skip_until("?>");
            else if (peek() == '<') el.children.push_back(element());
            else if (peek() == '&') entity(el.text);
            else el.text += s_[pos_++];
        }
    }
};

} // namespace detail

/// Parses a complete XML document. Throws ParseError on any well-formedness
/// violation this reader checks: unbalanced or mismatched tags, bad
/// attributes, unknown entities, trailing content.
inline Element parse(std::string_view text) { return detail::Reader(text).document(); }

inline std::string escape(std::string_view raw) {
    std::string out;
    out.reserve(raw.size());
    for (char c : raw) {
        switch (c) {
        case '<': out += "&lt;"; break;
        case '>': out += "&gt;"; break;
        case '&': out += "&amp;"; break;
        case '"': out += "&quot;"; break;
        case '\'': out += "&apos;"; break;
        default: out += c;
        }
    }
    return out;
}

} // namespace scensim::xml
