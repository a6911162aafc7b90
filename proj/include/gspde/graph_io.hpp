#pragma once

// Text format for graph descriptions:
//
//   # comment
//   name = fig1              (optional)
//   relax_degree = false     (optional)
//   [vertices]
//   # id  kind  z
//   1  exterior  0.0
//   6  infinity  inf
//   [edges]
//   # id  a  b  v_at_a  v_at_b
//   5  2.0  inf  5  6
//
// Kinds: interior | exterior | infinity | truncation-boundary. Unknown keys,
// sections and kinds are rejected.

#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "gspde/graph.hpp"

namespace gspde {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

inline double parse_real(const std::string& token, int line) {
  if (token == "inf" || token == "+inf" || token == "infinity") return kInfinity;
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad number '" + token + "'");
  }
}

inline int parse_int(const std::string& token, int line) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError,
                "line " + std::to_string(line) + ": bad integer '" + token + "'");
  }
}

inline VertexKind parse_kind(const std::string& token, int line) {
  if (token == "interior") return VertexKind::Interior;
  if (token == "exterior") return VertexKind::Exterior;
  if (token == "infinity") return VertexKind::Infinity;
  if (token == "truncation-boundary") return VertexKind::TruncationBoundary;
  throw Error(ErrorCode::ParseError,
              "line " + std::to_string(line) + ": unknown vertex kind '" + token + "'");
}

}  // namespace detail

struct GraphFile {
  std::string name;
  GraphDescription description;
};

inline GraphFile parse_graph_description(std::istream& in) {
  enum class Section { Header, Vertices, Edges } section = Section::Header;
  GraphFile out;
  std::string raw;
  int line = 0;
  while (std::getline(in, raw)) {
    ++line;
    const auto hash = raw.find('#');
    const std::string text = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (text.empty()) continue;
    if (text.front() == '[') {
      if (text == "[vertices]") {
        section = Section::Vertices;
      } else if (text == "[edges]") {
        section = Section::Edges;
      } else {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line) + ": unknown section " + text);
      }
      continue;
    }
    if (section == Section::Header) {
      const auto eq = text.find('=');
      if (eq == std::string::npos) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": expected key = value");
      }
      const std::string key = detail::trim(text.substr(0, eq));
      const std::string value = detail::trim(text.substr(eq + 1));
      if (key == "name") {
        out.name = value;
      } else if (key == "relax_degree") {
        if (value != "true" && value != "false") {
          throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": relax_degree must be true|false");
        }
        out.description.relax_degree = value == "true";
      } else {
        throw Error(ErrorCode::ParseError,
                    "line " + std::to_string(line) + ": unknown key '" + key + "'");
      }
      continue;
    }
    std::istringstream row(text);
    std::vector<std::string> tok;
    for (std::string t; row >> t;) tok.push_back(t);
    if (section == Section::Vertices) {
      if (tok.size() != 3) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": vertex row needs id kind z");
      }
      out.description.vertices.push_back({detail::parse_int(tok[0], line),
                                          detail::parse_kind(tok[1], line),
                                          detail::parse_real(tok[2], line)});
    } else {
      if (tok.size() != 5) {
        throw Error(ErrorCode::ParseError, "line " + std::to_string(line) + ": edge row needs id a b v_at_a v_at_b");
      }
      out.description.edges.push_back({detail::parse_int(tok[0], line),
                                       detail::parse_real(tok[1], line),
                                       detail::parse_real(tok[2], line),
                                       detail::parse_int(tok[3], line),
                                       detail::parse_int(tok[4], line)});
    }
  }
  return out;
}

inline MetricGraph read_graph(std::istream& in) {
  return build_graph(parse_graph_description(in).description);
}

inline void write_graph_description(std::ostream& os, const MetricGraph& g,
                                    const std::string& name = {}) {
  auto real = [](double v) {
    if (v == kInfinity) return std::string("inf");
    std::ostringstream s;
    s << std::setprecision(17) << v;
    return s.str();
  };
  if (!name.empty()) os << "name = " << name << '\n';
  if (g.relax_degree()) os << "relax_degree = true\n";
  os << "[vertices]\n# id kind z\n";
  for (const auto& v : g.vertices()) {
    os << v.id << ' ' << to_string(v.kind) << ' ' << real(v.z) << '\n';
  }
  os << "[edges]\n# id a b v_at_a v_at_b\n";
  for (const auto& e : g.edges()) {
    os << e.id << ' ' << real(e.a) << ' ' << real(e.b) << ' ' << e.v_at_a << ' ' << e.v_at_b << '\n';
  }
}

}  // namespace gspde
