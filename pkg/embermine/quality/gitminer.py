"""
gitminer.py
===========

Read-only access to a student repository through GitPython:

- enumerate_commits(): the first-parent chain (or every commit in
  topological order), oldest first, as CommitRecord.
- snapshot(), read_sources(): the `.c`/`.h` files of one commit.
- loc_share(): who wrote how much of the final C code, by blame.
- blame_line(): who last touched one line as of a given commit.

Identities are canonicalized through an AuthorMap. Code committed before
the project start, or by instructor accounts, belongs to TEMPLATE.
"""

import hashlib
import logging
import re
import threading
from collections import Counter
from dataclasses import dataclass, field
from fnmatch import fnmatchcase
from pathlib import Path

import git
from git.exc import BadName, BadObject, GitCommandError, InvalidGitRepositoryError, NoSuchPathError

from .exceptions import BlameRangeError, BranchNotFound, ConfigError, ObjectMissing, RepoOpenError
from .lexparse import SOURCE_SUFFIXES

logger = logging.getLogger(__name__)

TEMPLATE = "TEMPLATE"
UNKNOWN = "UNKNOWN"


def is_source_path(path: str) -> bool:
    return path.lower().endswith(SOURCE_SUFFIXES)


@dataclass(frozen=True)
class CommitRecord:
    hash: str
    author_id: str
    timestamp: int
    index: int
    message: str
    changed_lines: int
    changed_paths: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "hash": self.hash,
            "author_id": self.author_id,
            "timestamp": self.timestamp,
            "index": self.index,
            "message": self.message,
            "changed_lines": self.changed_lines,
            "changed_paths": list(self.changed_paths),
        }


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    blob_sha: str


@dataclass(frozen=True)
class BlameResult:
    author_id: str
    origin_commit: str


@dataclass
class RenameMap:
    """Renames between two commits. `ambiguous` maps a new path to its candidate old paths."""

    exact: dict[str, str] = field(default_factory=dict)
    ambiguous: dict[str, list[str]] = field(default_factory=dict)


# =======================================================================
# AUTHORS
# =======================================================================

_AUTHOR_LINE = re.compile(r"^(?P<canonical>\S+)\s+(?P<name>[^<]*?)\s*<(?P<email>[^>]*)>\s*$")


class AuthorMap:
    """
    Maps (name, email) identities to canonical author ids.

    Identities not listed map to their lowercase email (or name when the
    email is empty).
    """

    def __init__(
        self,
        aliases: dict[str, str] | None = None,
        template_patterns: tuple[str, ...] = (),
        template_before: float | None = None,
    ):
        self._by_email: dict[str, str] = {}
        self._by_name: dict[str, str] = {}
        for identity, canonical in (aliases or {}).items():
            if "@" in identity:
                self._by_email[identity.lower()] = canonical
            else:
                self._by_name[identity] = canonical
        self.template_patterns = tuple(template_patterns)
        self.template_before = template_before

    @classmethod
    def from_file(cls, path: Path, template_patterns=(), template_before=None) -> "AuthorMap":
        """Reads lines of the form `canonical Full Name <email>`; `#` starts a comment."""
        aliases: dict[str, str] = {}
        for number, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            match = _AUTHOR_LINE.match(line)
            if not match:
                raise ConfigError(f"{path}:{number}: expected 'canonical Name <email>'")
            if match["email"]:
                aliases[match["email"]] = match["canonical"]
            if match["name"]:
                aliases[match["name"]] = match["canonical"]
        return cls(aliases, template_patterns, template_before)

    def canonical(self, name: str, email: str) -> str:
        email = (email or "").strip().lower()
        if email in self._by_email:
            return self._by_email[email]
        if name in self._by_name:
            return self._by_name[name]
        return email or (name or UNKNOWN)

    def is_template(self, name: str, email: str, timestamp: float | None = None) -> bool:
        if self.template_before is not None and timestamp is not None and timestamp < self.template_before:
            return True
        candidates = [(email or "").lower(), name or ""]
        return any(fnmatchcase(value, pattern) for value in candidates for pattern in self.template_patterns)

    def resolve(self, name: str, email: str, timestamp: float | None = None) -> str:
        if self.is_template(name, email, timestamp):
            return TEMPLATE
        return self.canonical(name, email)


# =======================================================================
# REPOSITORY
# =======================================================================


class RepositoryMiner:
    """
    One open repository. Blame results are cached per (commit, path), so
    repeated attribution queries against the same snapshot stay cheap.
    """

    def __init__(self, repo_path, authors: AuthorMap | None = None, branch: str | None = None):
        try:
            self.repo = git.Repo(repo_path)
        except (InvalidGitRepositoryError, NoSuchPathError) as exc:
            raise RepoOpenError(f"'{repo_path}' is not a git repository") from exc
        self.path = Path(repo_path)
        self.authors = authors or AuthorMap()
        self.branch = branch
        self._blame_cache: dict[tuple[str, str], list[str]] = {}
        self._lock = threading.Lock()

    # -----------------------------------------------------------------------
    def _tip(self) -> str | None:
        if self.branch is None:
            try:
                return self.repo.head.commit.hexsha
            except ValueError:
                return None  # no commits yet
        try:
            return self.repo.commit(self.branch).hexsha
        except (BadName, BadObject, ValueError, GitCommandError) as exc:
            raise BranchNotFound(self.branch) from exc

    def commit(self, commit_hash: str) -> git.Commit:
        try:
            return self.repo.commit(commit_hash)
        except (BadName, BadObject, ValueError) as exc:
            raise ObjectMissing(f"Commit '{commit_hash}' is not in {self.path}") from exc

    def author_of(self, commit: git.Commit) -> str:
        return self.authors.resolve(commit.author.name, commit.author.email, commit.authored_date)

    def enumerate_commits(self, total_order: bool = False) -> list[CommitRecord]:
        """
        Commits from root to tip, oldest first. By default only the
        first-parent chain is walked, so a merge is one record; `total_order`
        lists every reachable commit in topological order instead.
        """
        tip = self._tip()
        if tip is None:
            return []
        options = {"topo_order": True} if total_order else {"first_parent": True}
        commits = list(self.repo.iter_commits(tip, reverse=True, **options))
        records = [self._record(commit, index) for index, commit in enumerate(commits)]
        logger.info("%s: %d commit(s) on %s", self.path, len(records), self.branch or "HEAD")
        return records

    def _record(self, commit: git.Commit, index: int) -> CommitRecord:
        changed_lines = 0
        changed_paths = []
        for path, counts in commit.stats.files.items():
            if is_source_path(str(path)):
                changed_lines += counts["insertions"] + counts["deletions"]
                changed_paths.append(str(path))
        message = commit.message if isinstance(commit.message, str) else commit.message.decode("utf-8", "replace")
        return CommitRecord(
            hash=commit.hexsha,
            author_id=self.author_of(commit),
            timestamp=int(commit.authored_date),
            index=index,
            message=message.strip(),
            changed_lines=changed_lines,
            changed_paths=tuple(sorted(changed_paths)),
        )

    # -----------------------------------------------------------------------
    def _source_blobs(self, commit_hash: str) -> list[git.Blob]:
        commit = self.commit(commit_hash)
        blobs = [item for item in commit.tree.traverse() if item.type == "blob" and is_source_path(item.path)]
        return sorted(blobs, key=lambda blob: blob.path)

    def source_manifest(self, commit_hash: str) -> list[ManifestEntry]:
        return [ManifestEntry(blob.path, blob.hexsha) for blob in self._source_blobs(commit_hash)]

    def source_tree_key(self, commit_hash: str) -> str:
        """Hash of the sorted (path, blob sha) pairs of the commit's C files."""
        digest = hashlib.sha256()
        for entry in self.source_manifest(commit_hash):
            digest.update(f"{entry.path}\0{entry.blob_sha}\n".encode())
        return digest.hexdigest()

    def read_sources(self, commit_hash: str) -> dict[str, bytes]:
        return {blob.path: blob.data_stream.read() for blob in self._source_blobs(commit_hash)}

    def snapshot(self, commit_hash: str, out_dir: Path) -> list[ManifestEntry]:
        """
        Writes the commit's `.c`/`.h` files below `out_dir`.

        Raises:
            ObjectMissing: The commit is not in the repository.
        """
        out_dir = Path(out_dir)
        manifest = []
        for blob in self._source_blobs(commit_hash):
            target = out_dir / blob.path
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(blob.data_stream.read())
            manifest.append(ManifestEntry(blob.path, blob.hexsha))
        return manifest

    def renames(self, parent_hash: str, commit_hash: str) -> RenameMap:
        """C file renames between two commits, from Git's similarity detection."""
        parent, child = self.commit(parent_hash), self.commit(commit_hash)
        pairs = [
            (diff.rename_from, diff.rename_to)
            for diff in parent.diff(child)
            if diff.renamed_file and is_source_path(diff.rename_to or "")
        ]
        sources = Counter(old for old, _ in pairs)
        targets = Counter(new for _, new in pairs)
        result = RenameMap()
        for old, new in pairs:
            if sources[old] == 1 and targets[new] == 1:
                result.exact[new] = old
            else:
                result.ambiguous.setdefault(new, []).append(old)
        return result

    # -----------------------------------------------------------------------
    def _blame_file(self, commit_hash: str, path: str) -> list[str]:
        """Origin commit hash of every line of `path` at `commit_hash`."""
        key = (commit_hash, path)
        with self._lock:
            if key in self._blame_cache:
                return self._blame_cache[key]
        try:
            entries = self.repo.blame(commit_hash, path)
        except GitCommandError as exc:
            raise ObjectMissing(f"Cannot blame '{path}' at {commit_hash[:10]}") from exc
        origins: list[str] = []
        for origin, lines in entries or []:
            origins.extend([origin.hexsha] * len(lines))
        with self._lock:
            self._blame_cache[key] = origins
        return origins

    def blame_line(self, commit_hash: str, path: str, line: int) -> BlameResult:
        """
        Author and commit that last modified `line` (1-based) of `path` as of
        `commit_hash`.

        Raises:
            BlameRangeError: `line` is not in the file.
        """
        origins = self._blame_file(commit_hash, path)
        if not 1 <= line <= len(origins):
            raise BlameRangeError(f"{path} has {len(origins)} line(s) at {commit_hash[:10]}; asked for {line}")
        origin = self.commit(origins[line - 1])
        return BlameResult(self.author_of(origin), origin.hexsha)

    def loc_counts(self, commit_hash: str | None = None) -> Counter:
        """Blamed line count per author id (TEMPLATE included) over the tip's C files."""
        commit_hash = commit_hash or self._tip()
        counts: Counter = Counter()
        if commit_hash is None:
            return counts
        authors: dict[str, str] = {}
        for entry in self.source_manifest(commit_hash):
            try:
                origins = self._blame_file(commit_hash, entry.path)
            except ObjectMissing:
                logger.warning("Skipping %s in LOC share: blame failed", entry.path)
                continue
            for origin in origins:
                if origin not in authors:
                    authors[origin] = self.author_of(self.commit(origin))
                counts[authors[origin]] += 1
        return counts

    def loc_share(self, commit_hash: str | None = None) -> dict[str, float]:
        """
        Fraction of the final C lines written by each author. TEMPLATE lines
        are left out of both numerator and denominator.
        """
        counts = self.loc_counts(commit_hash)
        counts.pop(TEMPLATE, None)
        total = sum(counts.values())
        if not total:
            return {}
        return {author: count / total for author, count in sorted(counts.items())}
