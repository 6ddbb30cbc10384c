#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "podhive/tree.hpp"

namespace podhive::store {

inline constexpr int kFormatVersion = 1;
inline constexpr std::string_view kDocumentFile = "repo.codepod.json";
inline constexpr std::string_view kLockFile = "repo.lock";
inline constexpr std::string_view kManifestFile = "_manifest.json";
inline constexpr std::string_view kDeckFile = "_deck.json";

struct RepoDocument {
  int format_version = kFormatVersion;
  std::string kernel_language = "podlang";
  Tree tree;
};

/// Canonical document bytes: sorted keys, nodes in preorder.
std::string save(const Tree& tree, const std::string& kernel_language = "podlang");
/// Throws Error("FormatVersionMismatch"), Error("MalformedDocument") for
/// bytes that are not a document, Error("InvalidTree").
RepoDocument load(std::string_view bytes);

/// Writes through a temporary file and rename. Throws Error("IoFailure").
void save_file(const std::filesystem::path& path, const Tree& tree,
               const std::string& kernel_language = "podlang");
RepoDocument load_file(const std::filesystem::path& path);

/// Exclusive writer lock on a repo directory: "repo.lock" created with
/// O_EXCL and holding the owner's pid. A lock whose pid is gone is taken
/// over. Throws Error("LockHeld") when another live process owns it.
class RepoLock {
 public:
  explicit RepoLock(const std::filesystem::path& directory);
  ~RepoLock();
  RepoLock(const RepoLock&) = delete;
  RepoLock& operator=(const RepoLock&) = delete;

  const std::filesystem::path& path() const noexcept { return path_; }

 private:
  std::filesystem::path path_;
};

/// NodeId <-> relative path of an exported tree. Decks map to
/// directories ("" for the root), pods to files.
struct Manifest {
  std::string kernel_language = "podlang";
  std::map<NodeId, std::string> paths;

  std::optional<NodeId> node_at(const std::string& path) const;
  std::string to_json() const;
  static Manifest from_json(std::string_view text);

  bool operator==(const Manifest&) const = default;
};

/// Deck name as a directory component: every character outside
/// [A-Za-z0-9_.-] becomes "_".
std::string sanitize_name(std::string_view name);

/// Writes the tree as directories and files. The target must be missing,
/// empty, or a previous export (has a manifest); in the last case old
/// content is replaced, a ".git" directory is kept. Throws
/// Error("IoFailure"), Error("NameClash").
Manifest export_files(const Tree& tree, const std::filesystem::path& directory,
                      const std::string& kernel_language = "podlang");
/// Reads an export back. Throws Error("IoFailure"), Error("InvalidTree").
RepoDocument import_files(const std::filesystem::path& directory);

/// Layout of an export without touching the disk: relative path -> bytes.
std::map<std::string, std::string> export_layout(const Tree& tree,
                                                 const std::string& kernel_language,
                                                 Manifest* manifest = nullptr);

struct Hunk {
  std::size_t old_start = 0;
  std::size_t old_count = 0;
  std::size_t new_start = 0;
  std::size_t new_count = 0;
  std::vector<std::string> lines;  // with their ' ', '+', '-' or '\' prefix

  bool operator==(const Hunk&) const = default;
};

enum class Change { Added, Deleted, Modified };

const char* to_string(Change change);

struct PodDiff {
  NodeId pod;
  Change change = Change::Modified;
  std::vector<Hunk> hunks;  // non-empty iff Modified
};

struct DiffReport {
  std::vector<PodDiff> pods;          // in diff order
  std::vector<NodeId> moved;          // renamed without content change
  std::vector<std::string> metadata;  // _deck.json / manifest paths touched
  std::vector<std::string> unknown;   // paths that map to no node
};

/// Maps a unified (git) diff over an export directory back to pods.
/// Paths are looked up in `old_manifest`; pod files missing from it are
/// identified by their "<index>-<id>.pod" name. Throws
/// Error("UnparseableDiff").
DiffReport pod_diff(const Manifest& old_manifest, std::string_view diff_text);

/// Thin wrapper over the git command line for an export directory.
class GitRepo {
 public:
  explicit GitRepo(std::filesystem::path directory);

  /// Initializes the repository if needed. Throws Error("GitFailure").
  void init();
  bool has_commits() const;
  /// Stages everything and commits; returns the new commit hash, or the
  /// current one when there is nothing to commit.
  std::string commit_all(const std::string& message);
  /// Stages everything and returns the diff of the working state against
  /// HEAD (or against nothing before the first commit), renames detected.
  std::string working_diff();
  /// File content at HEAD, if the file exists there.
  std::optional<std::string> show_head(const std::string& path) const;

 private:
  std::string git(const std::vector<std::string>& args, bool check = true,
                  int* exit_code = nullptr) const;

  std::filesystem::path dir_;
};

/// One podlang program that evaluates the tree's pods in run_tree order in
/// a single namespace, identifiers renamed per defining namespace. Each
/// pod's trailing expression is bound to "p<k>_result" (k = position in
/// run order); the program ends with the last such binding when the last
/// pod has one. Throws Error("UnsupportedKernel") for other languages.
std::string export_linearized(const Tree& tree, const std::string& kernel_language = "podlang");

/// Fallback for kernels without single-file mode: the code of each
/// namespace's pods, concatenated in run_tree order, one entry per
/// namespace in the order it is first reached.
std::vector<std::pair<Namespace, std::string>> export_per_namespace(const Tree& tree);

}  // namespace podhive::store
