import json
import tempfile
from io import StringIO
from pathlib import Path

from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase, override_settings

from .fixtures import ALICE, BOB, MAIN_C, SNIPPET_ONE, SNIPPET_ONE_CLEAN, STAFF, ScriptedRepo, handler_source


@override_settings(EMBERMINE_CONFIG=None)
class CommandTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def run_command(self, *args):
        stdout, stderr = StringIO(), StringIO()
        call_command(*args, stdout=stdout, stderr=stderr)
        return stdout.getvalue(), stderr.getvalue()


class CheckQualityCommandTests(CommandTestCase):
    def test_clean_tree(self):
        (self.root / "main.c").write_text(SNIPPET_ONE_CLEAN, encoding="utf-8")
        stdout, _ = self.run_command("check_quality", str(self.root), "--no-external")
        self.assertIn("No issues found.", stdout)

    def test_issues_exit_one(self):
        (self.root / "main.c").write_text(SNIPPET_ONE, encoding="utf-8")
        stdout = StringIO()
        with self.assertRaises(CommandError) as caught:
            call_command("check_quality", str(self.root), "--no-external", stdout=stdout)
        self.assertEqual(caught.exception.returncode, 1)
        self.assertEqual(len(stdout.getvalue().splitlines()), 5)
        self.assertIn("main.c:", stdout.getvalue())

    def test_json_output(self):
        (self.root / "isr.c").write_text(handler_source(1), encoding="utf-8")
        stdout = StringIO()
        with self.assertRaises(CommandError):
            call_command("check_quality", str(self.root), "--no-external", "--format", "json", stdout=stdout)
        document = json.loads(stdout.getvalue())
        self.assertEqual(document["count"], 1)
        self.assertEqual(document["diagnostics"][0]["rule_id"], "slowIRS")
        self.assertEqual(document["external"]["mode"], "disabled")

    def test_missing_path_exit_two(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("check_quality", str(self.root / "absent"), "--no-external")
        self.assertEqual(caught.exception.returncode, 2)

    def test_bad_config_exit_two(self):
        config = self.root / "embermine.toml"
        config.write_text("[nope]\n", encoding="utf-8")
        with self.assertRaises(CommandError) as caught:
            self.run_command("check_quality", str(self.root), "--config", str(config))
        self.assertEqual(caught.exception.returncode, 2)


class MineAndCohortCommandTests(CommandTestCase):
    def setUp(self):
        super().setUp()
        self.out = self.root / "out"
        script = ScriptedRepo(self.root / "repos/group-01")
        script.commit(STAFF, {"main.c": MAIN_C})
        script.commit(ALICE, {"src/isr_1.c": handler_source(1)})
        script.commit(BOB, {"src/isr_1.c": handler_source(1, slow=False)})

    def manifest(self, *names):
        text = "".join(
            f'[[repos]]\npath = "repos/{name}"\ngroup_id = "{name}"\nmembers = ["{ALICE.id}", "{BOB.id}"]\n\n'
            for name in names
        )
        path = self.root / "manifest.toml"
        path.write_text(text or "repos = []\n", encoding="utf-8")
        return str(path)

    def test_mine(self):
        stdout, _ = self.run_command(
            "mine", str(self.root / "repos/group-01"), "--no-external", "--out", str(self.out), "--workers", "1"
        )
        self.assertIn("group-01: 3 commit(s), 1 issue(s) (1 fixed)", stdout)
        for name in ("issues.jsonl", "metrics.json", "failures.json"):
            self.assertTrue((self.out / "group-01" / name).is_file())

    def test_mine_not_a_repository(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("mine", str(self.root / "repos/absent"), "--no-external", "--out", str(self.out))
        self.assertEqual(caught.exception.returncode, 2)

    def test_cohort_after_mining(self):
        self.run_command("mine", str(self.root / "repos/group-01"), "--no-external", "--out", str(self.out))
        stdout, _ = self.run_command("cohort", self.manifest("group-01"), "--out", str(self.out))
        self.assertIn("Cohort report for 1 repositories", stdout)
        report = json.loads((self.out / "cohort/report.json").read_text(encoding="utf-8"))
        self.assertEqual(report["metadata"]["repos"], ["group-01"])
        self.assertEqual(report["counts"]["fixed"], 1)
        self.assertTrue((self.out / "cohort/report.md").is_file())

    def test_cohort_mines_first(self):
        self.run_command("cohort", self.manifest("group-01"), "--mine", "--no-external", "--out", str(self.out))
        self.assertTrue((self.out / "group-01/issues.jsonl").is_file())
        self.assertTrue((self.out / "cohort/report.json").is_file())

    def test_unmined_repository_is_skipped(self):
        self.run_command("mine", str(self.root / "repos/group-01"), "--no-external", "--out", str(self.out))
        manifest = self.manifest("group-01", "group-02")
        with self.assertRaises(CommandError) as caught:
            self.run_command("cohort", manifest, "--out", str(self.out))
        self.assertEqual(caught.exception.returncode, 2)

        _, stderr = self.run_command("cohort", manifest, "--out", str(self.out), "--allow-partial")
        self.assertIn("Skipping group-02", stderr)
        report = json.loads((self.out / "cohort/report.json").read_text(encoding="utf-8"))
        self.assertEqual([item["repo"] for item in report["metadata"]["skipped_repos"]], ["group-02"])

    def test_empty_manifest(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("cohort", self.manifest(), "--out", str(self.out))
        self.assertEqual(caught.exception.returncode, 2)

    def test_nothing_mined(self):
        with self.assertRaises(CommandError) as caught:
            self.run_command("cohort", self.manifest("group-01"), "--out", str(self.out), "--allow-partial")
        self.assertEqual(caught.exception.returncode, 2)


class RulesCommandTests(CommandTestCase):
    def test_json_listing(self):
        stdout, _ = self.run_command("rules", "list", "--json")
        rules = {rule["id"]: rule for rule in json.loads(stdout)}
        self.assertEqual(rules["slowIRS"]["source"], "embedded")
        self.assertFalse(rules["slowIRS"]["critical"])
        self.assertTrue(rules["notVolatileVarIrs"]["critical"])
        self.assertTrue(rules["noIncludeGuard"]["header_only"])

    def test_text_listing(self):
        stdout, _ = self.run_command("rules", "list")
        self.assertTrue(any(line.startswith("wrongUseGlobalVar") for line in stdout.splitlines()))
