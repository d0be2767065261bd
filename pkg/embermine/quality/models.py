"""
models.py
=========

The only persistent state of embermine: a content-addressed cache of
per-commit analysis results.

- CommitAnalysis: the diagnostics one analyzer configuration produced for
  one source tree. Two commits with the same `.c`/`.h` contents share an
  entry, so re-mining a repository (or a fork of it) only analyzes trees it
  has not seen before.
"""

from django.db import models


class CommitAnalysis(models.Model):
    """
    Cached analysis of one source tree.

    The key covers everything that can change a diagnostic: the tree's
    (path, blob) manifest, the rule configuration digest, the external
    analyzer arguments and version, and the cache layout itself.
    """

    # sha256 of the inputs listed above.
    cache_key = models.CharField(max_length=64, unique=True)

    # The commit that first produced this entry (for inspection only).
    repo = models.CharField(max_length=255, blank=True, default="")
    commit_hash = models.CharField(max_length=40, blank=True, default="")

    # External analyzer version at analysis time, "" when it did not run.
    analyzer_version = models.CharField(max_length=40, blank=True, default="")

    # {"diagnostics": [...], "sources": [...], "warnings": [...]}
    payload = models.JSONField(default=dict)

    created_at = models.DateTimeField(auto_now_add=True)

    class Meta:
        verbose_name_plural = "commit analyses"

    @classmethod
    def lookup(cls, cache_key: str) -> dict | None:
        entry = cls.objects.filter(cache_key=cache_key).only("payload").first()
        return entry.payload if entry else None

    def __str__(self):
        return f"{self.repo}@{self.commit_hash[:10]} ({self.cache_key[:12]})"
