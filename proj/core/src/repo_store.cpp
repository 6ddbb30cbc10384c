#include "podhive/repo_store.hpp"

#include <fcntl.h>
#include <signal.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstdlib>
#include <map>
#include <set>
#include <cstring>
#include <fstream>
#include <functional>
#include <nlohmann/json.hpp>
#include <sstream>

namespace podhive::store {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void malformed(const std::string& why) {
  throw Error("MalformedDocument", why);
}

[[noreturn]] void invalid(const std::string& why) { throw Error("InvalidTree", why); }

[[noreturn]] void io_failure(const std::string& what, const fs::path& path) {
  throw Error("IoFailure", what + " " + path.string() + ": " + std::strerror(errno));
}

json flags_json(const NodeFlags& f) {
  return {{"public", f.is_public}, {"utility", f.utility}, {"test", f.test}};
}

template <class T>
T get_as(const json& obj, const char* key, const T& fallback) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return fallback;
  try {
    return it->get<T>();
  } catch (const json::exception&) {
    malformed(std::string("field '") + key + "' has the wrong type");
  }
}

NodeFlags parse_flags(const json& obj) {
  auto it = obj.find("flags");
  if (it == obj.end()) return {};
  if (!it->is_object()) malformed("'flags' must be an object");
  return NodeFlags{get_as<bool>(*it, "public", false), get_as<bool>(*it, "utility", false),
                   get_as<bool>(*it, "test", false)};
}

std::string dump(const json& j) { return j.dump(2) + "\n"; }

/// Re-raises tree construction errors as InvalidTree naming the node.
template <class F>
void building(const std::string& id, F&& f) {
  try {
    f();
  } catch (const Error& e) {
    if (e.code() == "InvalidTree") throw;
    invalid("node " + id + ": " + e.code() + ": " + e.what());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) io_failure("cannot read", path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, std::string_view bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) io_failure("cannot write", path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) io_failure("cannot write", path);
}

}  // namespace

std::string save(const Tree& tree, const std::string& kernel_language) {
  json nodes = json::array();
  for (const NodeId& id : tree.preorder()) {
    const Node& n = tree.node(id);
    json j = {{"id", n.id.value},
              {"kind", n.is_deck() ? "deck" : "pod"},
              {"parent", n.parent ? json(n.parent->value) : json(nullptr)},
              {"index", n.index},
              {"name", n.name},
              {"flags", flags_json(n.flags)},
              {"reexports", n.reexports},
              {"code", n.code},
              {"folded", n.folded}};
    nodes.push_back(std::move(j));
  }
  json doc = {{"format_version", kFormatVersion},
              {"kernel_language", kernel_language},
              {"nodes", std::move(nodes)}};
  return dump(doc);
}

RepoDocument load(std::string_view bytes) {
  json doc;
  try {
    doc = json::parse(bytes);
  } catch (const json::exception& e) {
    malformed(e.what());
  }
  if (!doc.is_object()) malformed("document is not a JSON object");
  if (!doc.contains("format_version") || !doc["format_version"].is_number_integer()) {
    malformed("missing integer 'format_version'");
  }
  int version = doc["format_version"].get<int>();
  if (version != kFormatVersion) {
    throw Error("FormatVersionMismatch", "document version " + std::to_string(version) +
                                             ", expected " + std::to_string(kFormatVersion));
  }
  RepoDocument out;
  out.kernel_language = get_as<std::string>(doc, "kernel_language", "podlang");
  if (!doc.contains("nodes") || !doc["nodes"].is_array()) malformed("missing 'nodes' list");

  struct Record {
    std::string id;
    bool deck = false;
    std::optional<std::string> parent;
    std::size_t index = 0;
    const json* body = nullptr;
  };
  std::vector<Record> records;
  std::map<std::string, std::vector<std::size_t>> by_parent;
  std::optional<std::size_t> root;
  std::set<std::string> seen;
  for (const json& n : doc["nodes"]) {
    if (!n.is_object()) malformed("node record is not an object");
    Record r;
    r.id = get_as<std::string>(n, "id", "");
    if (r.id.empty()) invalid("node without id");
    if (!seen.insert(r.id).second) invalid("duplicate node id " + r.id);
    std::string kind = get_as<std::string>(n, "kind", "");
    if (kind != "deck" && kind != "pod") invalid("node " + r.id + ": unknown kind '" + kind + "'");
    r.deck = kind == "deck";
    if (n.contains("parent") && !n["parent"].is_null()) {
      r.parent = get_as<std::string>(n, "parent", "");
    }
    r.index = get_as<std::size_t>(n, "index", 0);
    r.body = &n;
    records.push_back(std::move(r));
    const Record& added = records.back();
    if (!added.parent) {
      if (root) invalid("more than one root");
      if (!added.deck) invalid("root " + added.id + " is not a deck");
      root = records.size() - 1;
    } else {
      by_parent[*added.parent].push_back(records.size() - 1);
    }
  }
  if (!root) invalid("no root deck");

  out.tree = Tree::with_root(NodeId{records[*root].id});
  std::size_t placed = 1;
  std::vector<std::size_t> queue{*root};
  for (std::size_t qi = 0; qi < queue.size(); ++qi) {
    const Record& parent = records[queue[qi]];
    auto it = by_parent.find(parent.id);
    if (it == by_parent.end()) continue;
    std::vector<std::size_t> kids = it->second;
    std::sort(kids.begin(), kids.end(),
              [&](std::size_t a, std::size_t b) { return records[a].index < records[b].index; });
    for (std::size_t i = 0; i < kids.size(); ++i) {
      const Record& r = records[kids[i]];
      if (r.index != i) {
        invalid("children of " + parent.id + " do not have contiguous indices");
      }
      building(r.id, [&] {
        out.tree.create_node(NodeId{parent.id}, r.deck ? NodeKind::Deck : NodeKind::Pod, i,
                             NodeId{r.id});
      });
      ++placed;
      queue.push_back(kids[i]);
    }
  }
  if (placed != records.size()) invalid("some nodes are not reachable from the root");

  for (const Record& r : records) {
    const json& n = *r.body;
    NodeId id{r.id};
    building(r.id, [&] {
      std::string name = get_as<std::string>(n, "name", "");
      if (r.deck && r.parent) out.tree.rename(id, name);
      if (!r.deck && !name.empty()) invalid("pod " + r.id + " has a name");
      out.tree.set_flags(id, parse_flags(n));
      auto reexports = get_as<std::vector<std::string>>(n, "reexports", {});
      if (!reexports.empty()) out.tree.set_reexports(id, reexports);
      std::string code = get_as<std::string>(n, "code", "");
      if (!code.empty()) out.tree.set_code(id, code);
      out.tree.set_folded(id, get_as<bool>(n, "folded", false));
    });
  }
  out.tree.validate();
  return out;
}

void save_file(const fs::path& path, const Tree& tree, const std::string& kernel_language) {
  std::string bytes = save(tree, kernel_language);
  fs::path tmp = path;
  tmp += ".tmp";
  write_text(tmp, bytes);
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw Error("IoFailure", "cannot replace " + path.string() + ": " + ec.message());
}

RepoDocument load_file(const fs::path& path) { return load(read_text(path)); }

RepoLock::RepoLock(const fs::path& directory) : path_(directory / kLockFile) {
  for (int attempt = 0; attempt < 2; ++attempt) {
    int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY | O_CLOEXEC, 0644);
    if (fd >= 0) {
      std::string pid = std::to_string(::getpid()) + "\n";
      ssize_t n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      if (n != static_cast<ssize_t>(pid.size())) io_failure("cannot write", path_);
      return;
    }
    if (errno != EEXIST) io_failure("cannot create", path_);
    std::string owner;
    try {
      owner = read_text(path_);
    } catch (const Error&) {
      continue;  // released meanwhile
    }
    long pid = std::atol(owner.c_str());
    bool alive = pid > 0 && (::kill(static_cast<pid_t>(pid), 0) == 0 || errno == EPERM);
    if (alive) {
      throw Error("LockHeld", path_.string() + " is held by process " + std::to_string(pid));
    }
    std::error_code ec;
    fs::remove(path_, ec);  // stale: owner is gone
  }
  throw Error("LockHeld", path_.string() + " could not be acquired");
}

RepoLock::~RepoLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

std::optional<NodeId> Manifest::node_at(const std::string& path) const {
  for (const auto& [id, p] : paths) {
    if (p == path) return id;
  }
  return std::nullopt;
}

std::string Manifest::to_json() const {
  json nodes = json::object();
  for (const auto& [id, p] : paths) nodes[id.value] = p;
  return dump({{"format_version", kFormatVersion},
               {"kernel_language", kernel_language},
               {"nodes", std::move(nodes)}});
}

Manifest Manifest::from_json(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    malformed(std::string("manifest: ") + e.what());
  }
  if (!j.is_object() || !j.contains("nodes") || !j["nodes"].is_object()) {
    malformed("manifest without 'nodes'");
  }
  Manifest m;
  m.kernel_language = get_as<std::string>(j, "kernel_language", "podlang");
  for (const auto& [id, p] : j["nodes"].items()) {
    if (!p.is_string()) malformed("manifest path for " + id + " is not a string");
    m.paths[NodeId{id}] = p.get<std::string>();
  }
  return m;
}

std::string sanitize_name(std::string_view name) {
  std::string out;
  for (std::size_t i = 0; i < name.size();) {
    unsigned char c = static_cast<unsigned char>(name[i]);
    std::size_t len = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : 4;
    if (len == 1 && (std::isalnum(c) || c == '_' || c == '.' || c == '-')) {
      out += static_cast<char>(c);
    } else {
      out += '_';
    }
    i += std::min(len, name.size() - i);
  }
  if (out.empty() || out == "." || out == "..") out = "_" + out;
  return out;
}

std::map<std::string, std::string> export_layout(const Tree& tree,
                                                 const std::string& kernel_language,
                                                 Manifest* manifest_out) {
  std::map<std::string, std::string> files;
  Manifest manifest;
  manifest.kernel_language = kernel_language;
  auto join = [](const std::string& dir, const std::string& name) {
    return dir.empty() ? name : dir + "/" + name;
  };
  auto add_file = [&](const std::string& path, std::string bytes) {
    if (!files.emplace(path, std::move(bytes)).second) {
      throw Error("NameClash", "export path " + path + " is used twice");
    }
  };

  std::function<void(const NodeId&, const std::string&)> emit =
      [&](const NodeId& deck_id, const std::string& dir) {
        const Node& deck = tree.node(deck_id);
        manifest.paths[deck_id] = dir;
        json pods = json::object();
        for (const NodeId& c : deck.children) {
          const Node& child = tree.node(c);
          std::string prefix = std::to_string(child.index) + "-";
          if (child.is_pod()) {
            std::string path = join(dir, prefix + child.id.value + ".pod");
            add_file(path, child.code);
            manifest.paths[c] = path;
            pods[child.id.value] = {{"flags", flags_json(child.flags)}, {"folded", child.folded}};
          } else {
            std::string sub = join(dir, prefix + sanitize_name(child.name));
            emit(c, sub);
          }
        }
        json meta = {{"id", deck.id.value},
                     {"name", deck.name},
                     {"flags", flags_json(deck.flags)},
                     {"folded", deck.folded},
                     {"reexports", deck.reexports},
                     {"pods", std::move(pods)}};
        add_file(join(dir, std::string(kDeckFile)), dump(meta));
      };
  emit(tree.root(), "");
  add_file(std::string(kManifestFile), manifest.to_json());
  if (manifest_out) *manifest_out = std::move(manifest);
  return files;
}

Manifest export_files(const Tree& tree, const fs::path& directory,
                      const std::string& kernel_language) {
  Manifest manifest;
  auto files = export_layout(tree, kernel_language, &manifest);
  std::error_code ec;
  if (fs::exists(directory, ec)) {
    if (!fs::is_directory(directory, ec)) {
      throw Error("IoFailure", directory.string() + " is not a directory");
    }
    bool empty = fs::directory_iterator(directory, ec) == fs::directory_iterator();
    bool managed = fs::exists(directory / kManifestFile, ec);
    if (!empty && !managed) {
      throw Error("IoFailure",
                  directory.string() + " is neither empty nor a previous export");
    }
    for (const auto& entry : fs::directory_iterator(directory, ec)) {
      if (entry.path().filename() == ".git") continue;
      fs::remove_all(entry.path(), ec);
      if (ec) throw Error("IoFailure", "cannot clear " + entry.path().string());
    }
  } else {
    fs::create_directories(directory, ec);
    if (ec) throw Error("IoFailure", "cannot create " + directory.string() + ": " + ec.message());
  }
  for (const auto& [rel, bytes] : files) {
    fs::path p = directory / fs::path(rel);
    fs::create_directories(p.parent_path(), ec);
    if (ec) throw Error("IoFailure", "cannot create " + p.parent_path().string());
    write_text(p, bytes);
  }
  return manifest;
}

namespace {

/// Leading "<index>-" of an export entry name.
std::optional<std::size_t> entry_index(const std::string& name, std::string* rest) {
  std::size_t dash = name.find('-');
  if (dash == 0 || dash == std::string::npos) return std::nullopt;
  for (std::size_t i = 0; i < dash; ++i) {
    if (!std::isdigit(static_cast<unsigned char>(name[i]))) return std::nullopt;
  }
  if (rest) *rest = name.substr(dash + 1);
  return std::stoul(name.substr(0, dash));
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    malformed(path.string() + ": " + e.what());
  }
}

}  // namespace

RepoDocument import_files(const fs::path& directory) {
  RepoDocument out;
  if (!fs::exists(directory / kManifestFile)) {
    throw Error("IoFailure", directory.string() + " has no " + std::string(kManifestFile));
  }
  Manifest manifest = Manifest::from_json(read_text(directory / kManifestFile));
  out.kernel_language = manifest.kernel_language;

  json root_meta = read_json(directory / kDeckFile);
  std::string root_id = get_as<std::string>(root_meta, "id", "");
  if (root_id.empty()) invalid("root deck metadata has no id");
  out.tree = Tree::with_root(NodeId{root_id});

  std::function<void(const NodeId&, const fs::path&, const json&)> read_deck =
      [&](const NodeId& deck, const fs::path& dir, const json& meta) {
        NodeId id = deck;
        building(id.value, [&] {
          out.tree.set_flags(id, parse_flags(meta));
          out.tree.set_folded(id, get_as<bool>(meta, "folded", false));
          auto reexports = get_as<std::vector<std::string>>(meta, "reexports", {});
          if (!reexports.empty()) out.tree.set_reexports(id, reexports);
        });
        const json pods = meta.contains("pods") ? meta["pods"] : json::object();

        std::map<std::size_t, fs::path> entries;
        for (const auto& entry : fs::directory_iterator(dir)) {
          std::string name = entry.path().filename().string();
          std::string rest;
          auto index = entry_index(name, &rest);
          if (!index) continue;
          if (!entries.emplace(*index, entry.path()).second) {
            invalid("two entries with index " + std::to_string(*index) + " in " + dir.string());
          }
        }
        std::size_t expected = 0;
        for (const auto& [index, path] : entries) {
          if (index != expected++) invalid("missing index " + std::to_string(expected - 1) +
                                           " in " + dir.string());
          std::string name = path.filename().string();
          std::string rest;
          entry_index(name, &rest);
          if (fs::is_directory(path)) {
            json sub = read_json(path / kDeckFile);
            NodeId child{get_as<std::string>(sub, "id", "")};
            building(child.value, [&] {
              out.tree.create_node(deck, NodeKind::Deck, index, child);
              out.tree.rename(child, get_as<std::string>(sub, "name", ""));
            });
            read_deck(child, path, sub);
          } else {
            const std::string suffix = ".pod";
            if (rest.size() <= suffix.size() ||
                rest.compare(rest.size() - suffix.size(), suffix.size(), suffix) != 0) {
              invalid("unexpected file " + path.string());
            }
            NodeId child{rest.substr(0, rest.size() - suffix.size())};
            const json pod_meta = pods.contains(child.value) ? pods[child.value] : json::object();
            building(child.value, [&] {
              out.tree.create_node(deck, NodeKind::Pod, index, child);
              out.tree.set_code(child, read_text(path));
              out.tree.set_flags(child, parse_flags(pod_meta));
              out.tree.set_folded(child, get_as<bool>(pod_meta, "folded", false));
            });
          }
        }
      };
  read_deck(out.tree.root(), directory, root_meta);
  out.tree.validate();
  return out;
}

}  // namespace podhive::store
