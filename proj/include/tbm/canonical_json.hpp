#pragma once

#include <nlohmann/json.hpp>
#include <string>

#include "tbm/errors.hpp"
#include "tbm/util.hpp"

namespace tbm {

using ojson = nlohmann::ordered_json;

// Version stamp carried by every persisted document.
constexpr int kSchemaVersion = 1;

namespace detail {

inline void append_escaped(std::string& out, const std::string& s) {
  out += '"';
  for (unsigned char c : s) {
    switch (c) {
      case '"': out += "\\\""; break;
      case '\\': out += "\\\\"; break;
      case '\b': out += "\\b"; break;
      case '\f': out += "\\f"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      case '\t': out += "\\t"; break;
      default:
        if (c < 0x20) {
          char buf[8];
          std::snprintf(buf, sizeof(buf), "\\u%04x", c);
          out += buf;
        } else {
          out += static_cast<char>(c);
        }
    }
  }
  out += '"';
}

inline void write_canonical(std::string& out, const ojson& v, int indent) {
  const std::string pad(static_cast<size_t>(indent) * 2, ' ');
  const std::string pad_in(static_cast<size_t>(indent + 1) * 2, ' ');
  switch (v.type()) {
    case ojson::value_t::null: out += "null"; break;
    case ojson::value_t::boolean: out += v.get<bool>() ? "true" : "false"; break;
    case ojson::value_t::number_integer:
      out += std::to_string(v.get<int64_t>());
      break;
    case ojson::value_t::number_unsigned:
      out += std::to_string(v.get<uint64_t>());
      break;
    case ojson::value_t::number_float: {
      double d = v.get<double>();
      if (!std::isfinite(d)) fail(errc::corrupt_document, "non-finite number in document");
      out += fmt_real(d);
      break;
    }
    case ojson::value_t::string: append_escaped(out, v.get_ref<const std::string&>()); break;
    case ojson::value_t::array: {
      if (v.empty()) {
        out += "[]";
        break;
      }
      out += "[\n";
      bool first = true;
      for (const auto& el : v) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        write_canonical(out, el, indent + 1);
      }
      out += "\n" + pad + "]";
      break;
    }
    case ojson::value_t::object: {
      if (v.empty()) {
        out += "{}";
        break;
      }
      out += "{\n";
      bool first = true;
      for (auto it = v.begin(); it != v.end(); ++it) {
        if (!first) out += ",\n";
        first = false;
        out += pad_in;
        append_escaped(out, it.key());
        out += ": ";
        write_canonical(out, it.value(), indent + 1);
      }
      out += "\n" + pad + "}";
      break;
    }
    default: fail(errc::corrupt_document, "unserializable value");
  }
}

}  // namespace detail

// Deterministic serialization: insertion-ordered keys, 2-space indent, reals
// always printed with 17 significant digits. Byte-stable across runs.
inline std::string canonical_dump(const ojson& v) {
  std::string out;
  detail::write_canonical(out, v, 0);
  out += "\n";
  return out;
}

// Single-line variant for JSONL records and embedded snapshots.
inline std::string canonical_line(const ojson& v) {
  std::string out;
  if (v.is_object() && !v.empty()) {
    out += "{";
    bool first = true;
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (!first) out += ", ";
      first = false;
      detail::append_escaped(out, it.key());
      out += ": ";
      out += canonical_line(it.value());
    }
    out += "}";
    return out;
  }
  if (v.is_array() && !v.empty()) {
    out += "[";
    bool first = true;
    for (const auto& el : v) {
      if (!first) out += ", ";
      first = false;
      out += canonical_line(el);
    }
    out += "]";
    return out;
  }
  detail::write_canonical(out, v, 0);
  return out;
}

}  // namespace tbm
