#pragma once

#include <cstddef>
#include <string>
#include <string_view>

// Minimal UTF-8 helpers. Offsets exposed by the domain types are code point
// indices; these convert between the two coordinate systems.
namespace qag::utf8 {

std::u32string decode(std::string_view text);
std::string encode(std::u32string_view text);

// Number of code points. Invalid bytes count as one code point each.
std::size_t length(std::string_view text);

// Byte offset of the code point at `index` (index == length → text.size()).
std::size_t byte_offset(std::string_view text, std::size_t index);

// Code point index of a byte offset that lies on a code point boundary.
std::size_t code_point_index(std::string_view text, std::size_t byte_pos);

// Keeps at most `max_code_points` code points.
std::string truncate(std::string_view text, std::size_t max_code_points);

bool is_space(char32_t c);

std::string trim(std::string_view text);

// Trims and collapses every whitespace run into a single ASCII space.
std::string normalize_whitespace(std::string_view text);

}  // namespace qag::utf8
