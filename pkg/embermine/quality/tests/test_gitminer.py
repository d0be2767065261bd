import tempfile
from pathlib import Path

from django.test import SimpleTestCase

from quality.exceptions import BlameRangeError, BranchNotFound, ConfigError, ObjectMissing, RepoOpenError
from quality.gitminer import TEMPLATE, AuthorMap, RepositoryMiner, is_source_path

from .fixtures import ALICE, BOB, HOUR, MAIN_C, STAFF, START, TEMPLATE_PATTERNS, ScriptedRepo, handler_source


class MinerTestCase(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "group-01"
        self.script = ScriptedRepo(self.path)
        self.authors = AuthorMap(template_patterns=TEMPLATE_PATTERNS)

    def build(self):
        self.script.commit(STAFF, {"main.c": MAIN_C, "README.md": "# lab\n"})
        self.script.commit(ALICE, {"src/isr_1.c": handler_source(1)})
        self.script.commit(BOB, {"src/isr_2.c": handler_source(2)}, hours=5)
        self.script.commit(BOB, {"src/isr_1.c": handler_source(1, slow=False)})
        return RepositoryMiner(self.path, self.authors)


class EnumerateTests(MinerTestCase):
    def test_records(self):
        records = self.build().enumerate_commits()
        self.assertEqual([r.hash for r in records], [c.hash for c in self.script.commits])
        self.assertEqual([r.index for r in records], [0, 1, 2, 3])
        self.assertEqual([r.author_id for r in records], [TEMPLATE, ALICE.id, BOB.id, BOB.id])
        self.assertEqual([r.timestamp for r in records], [START, START + 24 * HOUR, START + 29 * HOUR, START + 53 * HOUR])
        self.assertEqual(records[0].changed_paths, ("main.c",))
        self.assertEqual(records[1].changed_lines, 4)
        self.assertEqual(records[3].changed_lines, 2)

    def test_empty_repository(self):
        self.assertEqual(RepositoryMiner(self.path).enumerate_commits(), [])
        self.assertEqual(RepositoryMiner(self.path).loc_share(), {})

    def test_unknown_branch(self):
        miner = self.build()
        with self.assertRaises(BranchNotFound):
            RepositoryMiner(self.path, branch="no-such-branch").enumerate_commits()
        self.assertEqual(len(miner.enumerate_commits()), 4)

    def test_not_a_repository(self):
        with self.assertRaises(RepoOpenError):
            RepositoryMiner(Path(self.tmp.name) / "missing")

    def test_missing_commit(self):
        with self.assertRaises(ObjectMissing):
            self.build().commit("0123456789abcdef0123456789abcdef01234567")


class SnapshotTests(MinerTestCase):
    def test_only_c_sources(self):
        miner = self.build()
        tip = self.script.commits[-1].hash
        self.assertEqual(sorted(miner.read_sources(tip)), ["main.c", "src/isr_1.c", "src/isr_2.c"])
        with tempfile.TemporaryDirectory() as out:
            manifest = miner.snapshot(tip, Path(out))
            self.assertEqual([entry.path for entry in manifest], ["main.c", "src/isr_1.c", "src/isr_2.c"])
            self.assertEqual((Path(out) / "src/isr_1.c").read_text(), handler_source(1, slow=False))
            self.assertFalse((Path(out) / "README.md").exists())

    def test_tree_key_ignores_other_files(self):
        miner = self.build()
        before = miner.source_tree_key(self.script.commits[-1].hash)
        docs = self.script.commit(ALICE, {"README.md": "# lab 2\n"})
        self.assertEqual(miner.source_tree_key(docs), before)
        code = self.script.commit(ALICE, {"src/isr_2.c": handler_source(2, slow=False)})
        self.assertNotEqual(miner.source_tree_key(code), before)

    def test_rename_detection(self):
        miner = self.build()
        before = self.script.commits[-1].hash
        after = self.script.rename(ALICE, "src/isr_2.c", "src/timer.c")
        renames = miner.renames(before, after)
        self.assertEqual(renames.exact, {"src/timer.c": "src/isr_2.c"})
        self.assertEqual(renames.ambiguous, {})


class BlameTests(MinerTestCase):
    def test_blame_line(self):
        miner = self.build()
        first, tip = self.script.commits[1].hash, self.script.commits[-1].hash
        self.assertEqual(miner.blame_line(first, "src/isr_1.c", 3).author_id, ALICE.id)
        self.assertEqual(miner.blame_line(tip, "src/isr_1.c", 3).author_id, BOB.id)
        self.assertEqual(miner.blame_line(tip, "src/isr_1.c", 1).author_id, ALICE.id)
        self.assertEqual(miner.blame_line(tip, "main.c", 1).author_id, TEMPLATE)
        with self.assertRaises(BlameRangeError):
            miner.blame_line(tip, "src/isr_1.c", 9)

    def test_loc_share_excludes_template(self):
        shares = self.build().loc_share()
        self.assertEqual(sorted(shares), [ALICE.id, BOB.id])
        self.assertAlmostEqual(shares[ALICE.id], 3 / 8, delta=1e-9)
        self.assertAlmostEqual(shares[BOB.id], 5 / 8, delta=1e-9)
        self.assertAlmostEqual(sum(shares.values()), 1.0, delta=1e-9)


class AuthorMapTests(SimpleTestCase):
    def test_aliases_from_file(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "authors.txt"
            path.write_text(
                "# canonical  name <email>\n"
                "alice Alice Student <alice@uni.example>\n"
                "alice Alice S <Alice@Home.example>\n",
                encoding="utf-8",
            )
            authors = AuthorMap.from_file(path)
        self.assertEqual(authors.canonical("Alice S", "ALICE@home.example"), "alice")
        self.assertEqual(authors.canonical("Alice Student", ""), "alice")
        self.assertEqual(authors.canonical("Bob", "Bob@Uni.example"), "bob@uni.example")

    def test_malformed_line(self):
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / "authors.txt"
            path.write_text("alice-without-email\n", encoding="utf-8")
            with self.assertRaises(ConfigError):
                AuthorMap.from_file(path)

    def test_template_rules(self):
        authors = AuthorMap(template_patterns=TEMPLATE_PATTERNS, template_before=START)
        self.assertEqual(authors.resolve(STAFF.name, STAFF.email, START + 1), TEMPLATE)
        self.assertEqual(authors.resolve(ALICE.name, ALICE.email, START - 1), TEMPLATE)
        self.assertEqual(authors.resolve(ALICE.name, ALICE.email, START), ALICE.id)

    def test_source_paths(self):
        self.assertTrue(is_source_path("src/Main.C"))
        self.assertTrue(is_source_path("inc/board.h"))
        self.assertFalse(is_source_path("main.cpp"))
