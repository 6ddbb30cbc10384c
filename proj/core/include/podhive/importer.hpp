#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "podhive/names.hpp"
#include "podhive/tree.hpp"

namespace podhive::importer {

struct Function {
  std::string id;
  std::string file;
  std::size_t loc = 0;
  std::optional<std::string> code;

  bool operator==(const Function&) const = default;
};

using CallEdge = std::pair<std::string, std::string>;  // caller, callee

/// Functions and call edges of a project. Edges may repeat (one entry per
/// call site) and may be self-edges.
struct CallGraph {
  std::vector<Function> functions;
  std::vector<CallEdge> edges;
  std::optional<std::vector<std::string>> entries;

  /// Throws Error("UnknownFunction").
  std::size_t index_of(const std::string& id) const;
  bool operator==(const CallGraph&) const = default;
};

/// Parses {"functions":[{"id","file","loc","code"?}],"edges":[[caller,callee]],
/// "entries":[id]?}. Throws Error("SchemaError") naming the offending field,
/// Error("DanglingEdge").
CallGraph parse_callgraph(std::string_view json_text);
CallGraph load_callgraph(const std::filesystem::path& path);
std::string to_json(const CallGraph& graph);

/// Builds a call graph from podlang sources (file path, text): every
/// top-level fn is a function, every call or reference to another
/// top-level fn an edge. Throws Error("ParseFailure"),
/// Error("DuplicateFunction").
CallGraph extract_podlang_callgraph(
    const std::vector<std::pair<std::string, std::string>>& files);

struct FunctionDegree {
  std::size_t in = 0;
  std::size_t out = 0;
  bool recursive = false;
};

/// Degrees count every non-self edge entry.
struct DegreeStats {
  std::vector<FunctionDegree> functions;  // graph order
  std::vector<std::size_t> in_histogram;  // [k] = functions with in-degree k
  std::vector<std::size_t> out_histogram;
  std::size_t edges = 0;  // without self-edges
  std::size_t self_edges = 0;
};

DegreeStats degree_stats(const CallGraph& graph);

struct FileStats {
  std::size_t functions = 0;
  std::size_t internal = 0;
  std::size_t uncalled = 0;

  bool operator==(const FileStats&) const = default;
};

/// A function is internal when it has at least one caller and every caller
/// lives in its file; functions nobody calls are counted as uncalled.
struct InternalStats {
  std::vector<bool> internal;  // graph order
  std::map<std::string, FileStats> files;
  std::size_t internal_total = 0;
  std::size_t uncalled_total = 0;

  double ratio(std::size_t function_count) const;
};

InternalStats internal_function_stats(const CallGraph& graph);

/// "id,file,in,out,internal" rows in graph order.
std::string stats_csv(const CallGraph& graph);
/// Histograms and per-file counts as canonical JSON.
std::string stats_json(const CallGraph& graph);

/// Minimum BFS depth from a virtual root attached to every function without
/// callers. Functions the root cannot reach (caller cycles) all get
/// 1 + the deepest reached level and are listed in `cyclic`.
struct Leveling {
  std::vector<std::size_t> level;  // graph order
  std::vector<std::string> cyclic;
};

Leveling mark_level(const CallGraph& graph);

enum class FunctionClass { Regular, Utility, Test };

const char* to_string(FunctionClass c);

/// Utility when callers sit on more than one level; Test when nobody calls
/// it and it is not an entry (without an entries list every uncalled
/// function is an entry); Regular otherwise.
std::vector<FunctionClass> classify_nodes(const CallGraph& graph, const Leveling& leveling);

struct WeightedEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  std::int64_t weight = 1;
};

/// Maximum-weight spanning arborescence (Chu-Liu/Edmonds). Returns the
/// parent of every vertex, nullopt for the root. Self-edges are ignored.
/// Throws Error("Unreachable") listing vertices the root cannot reach.
std::vector<std::optional<std::size_t>> max_arborescence(
    std::size_t vertex_count, std::size_t root, const std::vector<WeightedEdge>& edges);

struct EmitResult {
  Tree tree;
  std::map<std::string, NodeId> pod_of;   // every function
  std::map<std::string, NodeId> deck_of;  // non-test functions
  /// Names each pod defines (the function id), for FixedNameExtractor.
  std::unordered_map<NodeId, rules::PodNames> names;
  std::vector<FunctionClass> placed_as;  // graph order, after repairs
  std::vector<std::string> promoted;     // Regular placed as Utility
  std::vector<std::string> pinned;       // Utility placed under the root
};

/// Builds the deck tree: Regular functions nest per the maximum
/// arborescence of their callers, Utility functions become utility decks
/// at the lowest common deck of their callers, Test functions become test
/// pods in the deck of their shallowest callee. Callees that still do not
/// resolve are promoted to Utility, then pinned under the root. Throws
/// Error("EmissionInvariantViolation") if an edge cannot be made to resolve.
EmitResult emit_tree(const CallGraph& graph, const Leveling& leveling,
                     const std::vector<FunctionClass>& classes);

/// Call edges whose callee is not visible from the caller's pod.
std::vector<CallEdge> unresolved_edges(const CallGraph& graph, const EmitResult& result);

struct ImportResult {
  Leveling leveling;
  std::vector<FunctionClass> classes;
  EmitResult emitted;
};

ImportResult import_callgraph(const CallGraph& graph);

}  // namespace podhive::importer
