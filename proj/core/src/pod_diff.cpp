#include <map>
#include <regex>

#include "podhive/repo_store.hpp"

namespace podhive::store {

namespace {

[[noreturn]] void unparseable(std::size_t line, const std::string& why) {
  throw Error("UnparseableDiff", "line " + std::to_string(line) + ": " + why);
}

bool starts_with(std::string_view s, std::string_view prefix) {
  return s.substr(0, prefix.size()) == prefix;
}

/// Undoes git's C-style path quoting ("caf\303\251.pod").
std::string unquote(std::string_view s) {
  if (s.size() < 2 || s.front() != '"' || s.back() != '"') return std::string(s);
  std::string out;
  for (std::size_t i = 1; i + 1 < s.size(); ++i) {
    char c = s[i];
    if (c != '\\' || i + 2 >= s.size()) {
      out += c;
      continue;
    }
    char e = s[++i];
    switch (e) {
      case 'n': out += '\n'; break;
      case 't': out += '\t'; break;
      case '"': out += '"'; break;
      case '\\': out += '\\'; break;
      default:
        if (e >= '0' && e <= '7' && i + 2 < s.size()) {
          out += static_cast<char>(std::stoi(std::string(s.substr(i, 3)), nullptr, 8));
          i += 2;
        } else {
          out += e;
        }
    }
  }
  return out;
}

/// Path from a ---/+++ line: drops the "a/" or "b/" prefix and any
/// trailing tab-separated timestamp. nullopt for /dev/null.
std::optional<std::string> side_path(std::string_view raw) {
  std::string p = unquote(raw.substr(0, raw.find('\t')));
  if (p == "/dev/null") return std::nullopt;
  if (starts_with(p, "a/") || starts_with(p, "b/")) p = p.substr(2);
  return p;
}

struct FileSection {
  std::optional<std::string> old_path;
  std::optional<std::string> new_path;
  bool is_new = false;
  bool is_deleted = false;
  bool is_rename = false;
  bool saw_plus = false;
  std::vector<Hunk> hunks;
};

/// "a/X b/X" from a "diff --git" header when both sides are equal.
std::optional<std::string> header_path(std::string_view rest) {
  if (!rest.empty() && rest.front() == '"') {
    std::size_t close = rest.find("\" ", 1);
    if (close == std::string_view::npos) return std::nullopt;
    return side_path(rest.substr(0, close + 1));
  }
  if (rest.size() < 5 || (rest.size() - 5) % 2 != 0) return std::nullopt;
  std::size_t len = (rest.size() - 5) / 2;
  std::string_view a = rest.substr(2, len);
  std::string_view b = rest.substr(len + 5);
  if (!starts_with(rest, "a/") || rest.substr(len + 2, 3) != " b/" || a != b) {
    return std::nullopt;
  }
  return std::string(a);
}

std::vector<FileSection> parse_sections(std::string_view text) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    std::size_t nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    lines.push_back(text.substr(pos, nl - pos));
    pos = nl + 1;
  }

  static const std::regex hunk_re(R"(^@@ -(\d+)(?:,(\d+))? \+(\d+)(?:,(\d+))? @@.*$)");
  std::vector<FileSection> out;
  FileSection* cur = nullptr;
  auto fresh = [&] {
    out.emplace_back();
    cur = &out.back();
  };

  for (std::size_t i = 0; i < lines.size(); ++i) {
    std::string_view line = lines[i];
    std::size_t lineno = i + 1;
    if (starts_with(line, "diff --git ")) {
      fresh();
      auto p = header_path(line.substr(11));
      cur->old_path = p;
      cur->new_path = p;
    } else if (starts_with(line, "--- ") && (!cur || !cur->hunks.empty() || cur->saw_plus)) {
      // A plain unified diff (no git header) starts each file at "---".
      fresh();
      cur->old_path = side_path(line.substr(4));
      if (!cur->old_path) cur->is_new = true;
    } else if (!cur) {
      if (line.empty()) continue;
      unparseable(lineno, "expected a diff header");
    } else if (starts_with(line, "--- ")) {
      cur->old_path = side_path(line.substr(4));
      if (!cur->old_path) cur->is_new = true;
    } else if (starts_with(line, "+++ ")) {
      cur->saw_plus = true;
      cur->new_path = side_path(line.substr(4));
      if (!cur->new_path) cur->is_deleted = true;
    } else if (starts_with(line, "new file mode")) {
      cur->is_new = true;
    } else if (starts_with(line, "deleted file mode")) {
      cur->is_deleted = true;
    } else if (starts_with(line, "rename from ")) {
      cur->is_rename = true;
      cur->old_path = unquote(line.substr(12));
    } else if (starts_with(line, "rename to ")) {
      cur->is_rename = true;
      cur->new_path = unquote(line.substr(10));
    } else if (starts_with(line, "Binary files ")) {
      unparseable(lineno, "binary content");
    } else if (starts_with(line, "@@")) {
      std::match_results<std::string_view::const_iterator> m;
      if (!std::regex_match(line.begin(), line.end(), m, hunk_re)) {
        unparseable(lineno, "malformed hunk header");
      }
      Hunk h;
      h.old_start = std::stoul(m[1].str());
      h.old_count = m[2].matched ? std::stoul(m[2].str()) : 1;
      h.new_start = std::stoul(m[3].str());
      h.new_count = m[4].matched ? std::stoul(m[4].str()) : 1;
      std::size_t old_left = h.old_count, new_left = h.new_count;
      while (old_left > 0 || new_left > 0 ||
             (i + 1 < lines.size() && starts_with(lines[i + 1], "\\"))) {
        if (++i >= lines.size()) unparseable(lineno, "hunk is truncated");
        std::string_view body = lines[i];
        char kind = body.empty() ? ' ' : body[0];
        if (kind == ' ' && old_left > 0 && new_left > 0) {
          --old_left;
          --new_left;
        } else if (kind == '-' && old_left > 0) {
          --old_left;
        } else if (kind == '+' && new_left > 0) {
          --new_left;
        } else if (kind != '\\') {
          unparseable(i + 1, "line does not fit the hunk");
        }
        h.lines.push_back(body.empty() ? std::string(" ") : std::string(body));
      }
      cur->hunks.push_back(std::move(h));
    } else if (starts_with(line, "index ") || starts_with(line, "similarity index") ||
               starts_with(line, "dissimilarity index") || starts_with(line, "old mode") ||
               starts_with(line, "new mode") || starts_with(line, "copy ") ||
               line.empty()) {
      // headers without pod-level meaning
    } else {
      unparseable(lineno, "unexpected line '" + std::string(line.substr(0, 40)) + "'");
    }
  }
  return out;
}

bool is_metadata(const std::string& path) {
  auto slash = path.rfind('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  return base == kDeckFile || base == kManifestFile;
}

/// Pod id from an export file name "<index>-<id>.pod".
std::optional<NodeId> pod_from_name(const std::string& path) {
  auto slash = path.rfind('/');
  std::string base = slash == std::string::npos ? path : path.substr(slash + 1);
  static const std::regex pod_re(R"(^\d+-(.+)\.pod$)");
  std::smatch m;
  if (!std::regex_match(base, m, pod_re)) return std::nullopt;
  return NodeId{m[1].str()};
}

}  // namespace

const char* to_string(Change change) {
  switch (change) {
    case Change::Added: return "Added";
    case Change::Deleted: return "Deleted";
    case Change::Modified: return "Modified";
  }
  return "?";
}

DiffReport pod_diff(const Manifest& old_manifest, std::string_view diff_text) {
  DiffReport report;
  std::map<NodeId, std::size_t> slot;  // pod -> index in report.pods
  auto identify = [&](const std::optional<std::string>& path, bool in_old) {
    std::optional<NodeId> id;
    if (path && in_old) id = old_manifest.node_at(*path);
    if (!id && path) id = pod_from_name(*path);
    return id;
  };

  for (FileSection& s : parse_sections(diff_text)) {
    const std::string& any_path = s.new_path ? *s.new_path : s.old_path ? *s.old_path : "";
    if (any_path.empty()) continue;
    if (is_metadata(any_path) || (s.old_path && is_metadata(*s.old_path))) {
      report.metadata.push_back(any_path);
      continue;
    }
    std::optional<NodeId> old_id = s.is_new ? std::nullopt : identify(s.old_path, true);
    std::optional<NodeId> new_id = s.is_deleted ? std::nullopt : identify(s.new_path, false);
    if (!old_id && !new_id) {
      report.unknown.push_back(any_path);
      continue;
    }

    Change change;
    NodeId pod;
    if (s.is_new) {
      change = Change::Added;
      pod = *new_id;
    } else if (s.is_deleted) {
      change = Change::Deleted;
      pod = *old_id;
    } else {
      pod = old_id ? *old_id : *new_id;
      if (s.hunks.empty()) {
        if (s.is_rename) report.moved.push_back(pod);
        continue;
      }
      change = Change::Modified;
    }

    auto it = slot.find(pod);
    if (it != slot.end()) {
      // The same pod deleted in one place and added in another.
      PodDiff& prev = report.pods[it->second];
      prev.change = Change::Modified;
      prev.hunks.insert(prev.hunks.end(), s.hunks.begin(), s.hunks.end());
      continue;
    }
    slot[pod] = report.pods.size();
    report.pods.push_back(PodDiff{pod, change, std::move(s.hunks)});
  }
  for (PodDiff& d : report.pods) {
    if (d.change != Change::Modified) d.hunks.clear();
  }
  return report;
}

}  // namespace podhive::store
