#include <algorithm>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "podhive/importer.hpp"
#include "podhive/podlang.hpp"

namespace podhive::importer {

using nlohmann::json;

namespace {

[[noreturn]] void schema_error(const std::string& path, const std::string& why) {
  throw Error("SchemaError", path + ": " + why);
}

const json& field(const json& obj, const std::string& key, const std::string& path) {
  auto it = obj.find(key);
  if (it == obj.end()) schema_error(path + "." + key, "missing");
  return *it;
}

std::string string_at(const json& v, const std::string& path) {
  if (!v.is_string()) schema_error(path, "expected a string");
  return v.get<std::string>();
}

std::unordered_map<std::string, std::size_t> index_map(const CallGraph& g) {
  std::unordered_map<std::string, std::size_t> m;
  for (std::size_t i = 0; i < g.functions.size(); ++i) m.emplace(g.functions[i].id, i);
  return m;
}

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::size_t CallGraph::index_of(const std::string& id) const {
  for (std::size_t i = 0; i < functions.size(); ++i) {
    if (functions[i].id == id) return i;
  }
  throw Error("UnknownFunction", "no function '" + id + "'");
}

CallGraph parse_callgraph(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    schema_error("$", std::string("not JSON: ") + e.what());
  }
  if (!doc.is_object()) schema_error("$", "expected an object");

  CallGraph g;
  const json& fns = field(doc, "functions", "$");
  if (!fns.is_array()) schema_error("$.functions", "expected an array");
  std::set<std::string> ids;
  for (std::size_t i = 0; i < fns.size(); ++i) {
    std::string path = "$.functions[" + std::to_string(i) + "]";
    const json& f = fns[i];
    if (!f.is_object()) schema_error(path, "expected an object");
    Function fn;
    fn.id = string_at(field(f, "id", path), path + ".id");
    if (fn.id.empty()) schema_error(path + ".id", "empty id");
    if (!ids.insert(fn.id).second) schema_error(path + ".id", "duplicate id '" + fn.id + "'");
    fn.file = string_at(field(f, "file", path), path + ".file");
    const json& loc = field(f, "loc", path);
    if (!loc.is_number_unsigned() && !(loc.is_number_integer() && loc.get<std::int64_t>() >= 0)) {
      schema_error(path + ".loc", "expected a non-negative integer");
    }
    fn.loc = loc.get<std::size_t>();
    if (auto c = f.find("code"); c != f.end() && !c->is_null()) {
      fn.code = string_at(*c, path + ".code");
    }
    g.functions.push_back(std::move(fn));
  }

  const json& edges = field(doc, "edges", "$");
  if (!edges.is_array()) schema_error("$.edges", "expected an array");
  for (std::size_t i = 0; i < edges.size(); ++i) {
    std::string path = "$.edges[" + std::to_string(i) + "]";
    const json& e = edges[i];
    if (!e.is_array() || e.size() != 2) schema_error(path, "expected [caller, callee]");
    std::string from = string_at(e[0], path + "[0]");
    std::string to = string_at(e[1], path + "[1]");
    for (const std::string& end : {from, to}) {
      if (!ids.count(end)) {
        throw Error("DanglingEdge", path + ": unknown function '" + end + "'");
      }
    }
    g.edges.emplace_back(std::move(from), std::move(to));
  }

  if (auto en = doc.find("entries"); en != doc.end() && !en->is_null()) {
    if (!en->is_array()) schema_error("$.entries", "expected an array");
    std::vector<std::string> entries;
    for (std::size_t i = 0; i < en->size(); ++i) {
      std::string path = "$.entries[" + std::to_string(i) + "]";
      std::string id = string_at((*en)[i], path);
      if (!ids.count(id)) schema_error(path, "unknown function '" + id + "'");
      entries.push_back(std::move(id));
    }
    g.entries = std::move(entries);
  }
  return g;
}

CallGraph load_callgraph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("IoFailure", "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_callgraph(ss.str());
}

std::string to_json(const CallGraph& g) {
  json fns = json::array();
  for (const Function& f : g.functions) {
    json o{{"id", f.id}, {"file", f.file}, {"loc", f.loc}};
    if (f.code) o["code"] = *f.code;
    fns.push_back(std::move(o));
  }
  json edges = json::array();
  for (const auto& [a, b] : g.edges) edges.push_back({a, b});
  json doc{{"functions", std::move(fns)}, {"edges", std::move(edges)}};
  if (g.entries) doc["entries"] = *g.entries;
  return doc.dump(2) + "\n";
}

CallGraph extract_podlang_callgraph(
    const std::vector<std::pair<std::string, std::string>>& files) {
  using namespace podlang;
  CallGraph g;
  std::vector<std::pair<const FnStmt*, std::size_t>> bodies;
  std::vector<Program> programs;
  programs.reserve(files.size());
  std::set<std::string> names;
  for (const auto& [path, text] : files) {
    try {
      programs.push_back(parse(text));
    } catch (const Error& e) {
      throw Error("ParseFailure", path + ": " + e.what());
    }
    for (const Item& item : programs.back().items) {
      const auto* fn = std::get_if<FnStmt>(&item);
      if (!fn) continue;
      if (!names.insert(fn->name).second) {
        throw Error("DuplicateFunction", "fn '" + fn->name + "' is defined twice (" + path + ")");
      }
      std::string code = to_source(item);
      Function f{fn->name, path, 0, code};
      f.loc = static_cast<std::size_t>(std::count(code.begin(), code.end(), '\n')) +
              (code.empty() || code.back() == '\n' ? 0 : 1);
      bodies.emplace_back(fn, g.functions.size());
      g.functions.push_back(std::move(f));
    }
  }

  for (const auto& [fn, idx] : bodies) {
    const std::string& caller = g.functions[idx].id;
    auto is_param = [&](const std::string& n) {
      return std::find(fn->params.begin(), fn->params.end(), n) != fn->params.end();
    };
    auto note = [&](const std::string& n) {
      if (names.count(n) && !is_param(n)) g.edges.emplace_back(caller, n);
    };
    std::function<void(const ExprPtr&)> walk = [&](const ExprPtr& e) {
      std::visit(
          [&](const auto& n) {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, VarRef>) {
              note(n.name);
            } else if constexpr (std::is_same_v<T, Call>) {
              note(n.callee);
              for (const ExprPtr& a : n.args) walk(a);
            } else if constexpr (std::is_same_v<T, BinOp>) {
              walk(n.lhs);
              walk(n.rhs);
            } else if constexpr (std::is_same_v<T, If>) {
              walk(n.cond);
              walk(n.then_branch);
              walk(n.else_branch);
            }
          },
          e->node);
    };
    walk(fn->body);
  }
  return g;
}

DegreeStats degree_stats(const CallGraph& g) {
  auto idx = index_map(g);
  DegreeStats s;
  s.functions.resize(g.functions.size());
  for (const auto& [a, b] : g.edges) {
    std::size_t ia = idx.at(a), ib = idx.at(b);
    if (ia == ib) {
      s.functions[ia].recursive = true;
      ++s.self_edges;
      continue;
    }
    ++s.functions[ia].out;
    ++s.functions[ib].in;
    ++s.edges;
  }
  for (const FunctionDegree& d : s.functions) {
    if (d.in >= s.in_histogram.size()) s.in_histogram.resize(d.in + 1, 0);
    if (d.out >= s.out_histogram.size()) s.out_histogram.resize(d.out + 1, 0);
    ++s.in_histogram[d.in];
    ++s.out_histogram[d.out];
  }
  return s;
}

double InternalStats::ratio(std::size_t function_count) const {
  return function_count == 0 ? 0.0
                             : static_cast<double>(internal_total) /
                                   static_cast<double>(function_count);
}

InternalStats internal_function_stats(const CallGraph& g) {
  auto idx = index_map(g);
  std::vector<bool> called(g.functions.size(), false);
  std::vector<bool> foreign(g.functions.size(), false);
  for (const auto& [a, b] : g.edges) {
    std::size_t ia = idx.at(a), ib = idx.at(b);
    if (ia == ib) continue;
    called[ib] = true;
    if (g.functions[ia].file != g.functions[ib].file) foreign[ib] = true;
  }
  InternalStats s;
  s.internal.resize(g.functions.size());
  for (std::size_t i = 0; i < g.functions.size(); ++i) {
    FileStats& f = s.files[g.functions[i].file];
    ++f.functions;
    s.internal[i] = called[i] && !foreign[i];
    if (s.internal[i]) {
      ++f.internal;
      ++s.internal_total;
    }
    if (!called[i]) {
      ++f.uncalled;
      ++s.uncalled_total;
    }
  }
  return s;
}

std::string stats_csv(const CallGraph& g) {
  DegreeStats d = degree_stats(g);
  InternalStats in = internal_function_stats(g);
  std::string out = "id,file,in,out,internal\n";
  for (std::size_t i = 0; i < g.functions.size(); ++i) {
    out += csv_field(g.functions[i].id) + "," + csv_field(g.functions[i].file) + "," +
           std::to_string(d.functions[i].in) + "," + std::to_string(d.functions[i].out) + "," +
           (in.internal[i] ? "1" : "0") + "\n";
  }
  return out;
}

std::string stats_json(const CallGraph& g) {
  DegreeStats d = degree_stats(g);
  InternalStats in = internal_function_stats(g);
  json files = json::object();
  for (const auto& [name, f] : in.files) {
    files[name] = {{"functions", f.functions}, {"internal", f.internal}, {"uncalled", f.uncalled}};
  }
  json doc{{"functions", g.functions.size()},
           {"files", in.files.size()},
           {"edges", d.edges},
           {"self_edges", d.self_edges},
           {"in_degree_histogram", d.in_histogram},
           {"out_degree_histogram", d.out_histogram},
           {"internal_functions", in.internal_total},
           {"uncalled_functions", in.uncalled_total},
           {"internal_ratio", in.ratio(g.functions.size())},
           {"per_file", std::move(files)}};
  return doc.dump(2) + "\n";
}

}  // namespace podhive::importer
