import json
import tempfile
from pathlib import Path
from unittest import mock

from django.test import SimpleTestCase, TestCase, override_settings

from quality.config import RunConfig
from quality.diagnostics import EMBEDDED, EXTERNAL, SLOW_ISR
from quality.exceptions import AnalyzerTimeout, InputError, RepoOpenError
from quality.extingest import ExternalReport, ReportEntry
from quality.gitminer import TEMPLATE
from quality.models import CommitAnalysis
from quality.pipeline import DISABLED, REPORTS, RUN, UNAVAILABLE, check_tree, mine_repo, read_tree

from .fixtures import (
    ALICE,
    BOB,
    MAIN_C,
    SNIPPET_ONE,
    SNIPPET_ONE_CLEAN,
    STAFF,
    TEMPLATE_PATTERNS,
    ScriptedRepo,
    cppcheck_error,
    cppcheck_xml,
    handler_source,
)

CONFIG = RunConfig(template_patterns=TEMPLATE_PATTERNS)


class CheckTreeTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.root = Path(self.tmp.name)

    def test_snippet_tree(self):
        (self.root / "src").mkdir()
        (self.root / "src/main.c").write_text(SNIPPET_ONE, encoding="utf-8")
        (self.root / "notes.txt").write_text("not C", encoding="utf-8")
        result = check_tree(self.root, CONFIG, use_external=False)
        self.assertEqual(len(result.diagnostics), 5)
        self.assertEqual({d.path for d in result.diagnostics}, {"src/main.c"})
        self.assertEqual(result.sources, frozenset({EMBEDDED}))

    def test_single_file(self):
        path = self.root / "clean.c"
        path.write_text(SNIPPET_ONE_CLEAN, encoding="utf-8")
        self.assertEqual(check_tree(path, CONFIG, use_external=False).diagnostics, [])

    def test_external_report_is_merged(self):
        (self.root / "main.c").write_text(MAIN_C, encoding="utf-8")
        report = self.root / "report.xml"
        report.write_text(cppcheck_xml(cppcheck_error("unusedVariable", "main.c", 3, symbol="x")), encoding="utf-8")
        result = check_tree(self.root, CONFIG, external_report=report)
        self.assertEqual([(d.rule_id, d.source) for d in result.diagnostics], [("unusedVariable", EXTERNAL)])
        self.assertEqual(result.sources, frozenset({EMBEDDED, EXTERNAL}))

    def test_same_line_findings_and_repeated_report_entries(self):
        (self.root / "main.c").write_text("void A_Handler(void) {\n  printf(\"a\"); printf(\"b\");\n}\n", encoding="utf-8")
        report = self.root / "report.xml"
        entry = cppcheck_error("unusedVariable", "main.c", 2, symbol="x")
        report.write_text(cppcheck_xml(entry, entry), encoding="utf-8")
        result = check_tree(self.root, CONFIG, external_report=report)
        self.assertEqual(
            [(d.rule_id, d.line, d.symbol) for d in result.diagnostics],
            [(SLOW_ISR, 2, "printf"), (SLOW_ISR, 2, "printf"), ("unusedVariable", 2, "x")],
        )

    def test_undecodable_file_is_skipped(self):
        (self.root / "main.c").write_text(MAIN_C, encoding="utf-8")
        (self.root / "bad.c").write_bytes(b"\x81\x8d\x8f\x90\x9d")
        result = check_tree(self.root, CONFIG, use_external=False)
        self.assertEqual(sorted(result.models), ["main.c"])
        self.assertEqual(len(result.warnings), 1)

    def test_hidden_directories_are_ignored(self):
        (self.root / ".git").mkdir()
        (self.root / ".git/hook.c").write_text(SNIPPET_ONE, encoding="utf-8")
        (self.root / "main.c").write_text(MAIN_C, encoding="utf-8")
        self.assertEqual(sorted(read_tree(self.root)), ["main.c"])

    def test_missing_path(self):
        with self.assertRaises(InputError):
            check_tree(self.root / "nope", CONFIG)

    def test_registration_across_files(self):
        (self.root / "main.c").write_text(
            "int main(void) {\n  irq_set_exclusive_handler(5, uart_rx);\n  return 0;\n}\n", encoding="utf-8"
        )
        (self.root / "uart.c").write_text("void uart_rx(void) {\n  printf(\"rx\");\n}\n", encoding="utf-8")
        result = check_tree(self.root, CONFIG, use_external=False)
        self.assertEqual([(d.path, d.line, d.rule_id) for d in result.diagnostics], [("uart.c", 2, SLOW_ISR)])


class MineTestCase(TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)
        self.path = Path(self.tmp.name) / "group-07"
        self.script = ScriptedRepo(self.path)

    def mine(self, **kwargs):
        options = {"write": False, "use_external": False, "workers": 2}
        options.update(kwargs)
        return mine_repo(self.path, options.pop("cfg", CONFIG), **options)


class MineRepoTests(MineTestCase):
    def build(self):
        script = self.script
        script.commit(STAFF, {"main.c": MAIN_C, "src/isr_0.c": handler_source(0)})
        script.commit(ALICE, {"src/isr_1.c": handler_source(1)})
        script.commit(BOB, {"src/isr_2.c": handler_source(2)})
        script.commit(ALICE, {"main.c": MAIN_C + "// tidy\n"})
        script.commit(BOB, {"src/isr_1.c": handler_source(1, slow=False)})
        script.commit(ALICE, {"src/isr_3.c": handler_source(3)})
        script.commit(BOB, {"src/isr_2.c": handler_source(2, slow=False)})

    def test_lifecycles(self):
        self.build()
        result = self.mine()
        self.assertEqual(len(result.commits), 7)
        by_path = {lc.introduced_path: lc for lc in result.lifecycles}
        self.assertEqual(
            [lc.introduced_path for lc in result.lifecycles],
            ["src/isr_1.c", "src/isr_2.c", "src/isr_0.c", "src/isr_3.c"],
        )

        first = by_path["src/isr_1.c"]
        self.assertEqual((first.introduced_index, first.fixed_index), (1, 4))
        self.assertEqual((first.introduced_by, first.fixed_by, first.same_fixer), (ALICE.id, BOB.id, False))
        self.assertEqual((first.alive_commit_count, first.alive_days), (3, 3.0))
        self.assertTrue(first.direct_fix)

        second = by_path["src/isr_2.c"]
        self.assertEqual((second.introduced_by, second.fixed_by, second.same_fixer), (BOB.id, BOB.id, True))
        self.assertEqual(second.alive_commit_count, 4)
        self.assertTrue(second.fixed_in_last_commit)

        template = by_path["src/isr_0.c"]
        self.assertEqual(template.introduced_by, TEMPLATE)
        self.assertFalse(template.fixed)
        self.assertEqual(template.present_in, list(range(7)))

        self.assertEqual(by_path["src/isr_3.c"].introduced_by, ALICE.id)
        self.assertEqual({lc.rule_id for lc in result.lifecycles}, {SLOW_ISR})

    def test_metrics(self):
        self.build()
        metrics = self.mine().metrics
        self.assertEqual(metrics["per_rule"], {SLOW_ISR: {"occurrence": 4, "total": 16}})
        self.assertEqual((metrics["issues"], metrics["fixed"], metrics["unknown_attribution"]), (4, 2, 0))
        self.assertTrue(metrics["conserved"])
        self.assertEqual(metrics["head"], self.script.commits[-1].hash)
        self.assertEqual(metrics["analyzer"]["mode"], DISABLED)
        self.assertAlmostEqual(metrics["loc_share"][ALICE.id], 8 / 13, delta=1e-9)
        self.assertAlmostEqual(metrics["loc_share"][BOB.id], 5 / 13, delta=1e-9)

    def test_artifacts(self):
        self.build()
        with tempfile.TemporaryDirectory() as out:
            result = self.mine(write=True, out_dir=Path(out))
            repo_dir = Path(out) / "group-07"
            self.assertEqual(result.out_dir, repo_dir)
            issues = [json.loads(line) for line in (repo_dir / "issues.jsonl").read_text().splitlines()]
            metrics = json.loads((repo_dir / "metrics.json").read_text())
            failures = json.loads((repo_dir / "failures.json").read_text())
        self.assertEqual(len(issues), 4)
        self.assertEqual(issues[0]["rule_id"], SLOW_ISR)
        self.assertEqual(metrics["commits"], 7)
        self.assertEqual(failures["failures"], [])

    def test_cache_makes_reruns_identical(self):
        self.build()
        first = self.mine()
        self.assertEqual(CommitAnalysis.objects.count(), 7)
        with mock.patch("quality.pipeline.analyze_sources") as analyze:
            second = self.mine()
        analyze.assert_not_called()
        self.assertEqual([lc.to_dict() for lc in first.lifecycles], [lc.to_dict() for lc in second.lifecycles])
        self.assertEqual(first.metrics, second.metrics)
        self.assertEqual(CommitAnalysis.objects.count(), 7)

    def test_worker_count_does_not_change_results(self):
        self.build()
        serial = self.mine(workers=1)
        CommitAnalysis.objects.all().delete()
        parallel = self.mine(workers=4)
        self.assertEqual([lc.to_dict() for lc in serial.lifecycles], [lc.to_dict() for lc in parallel.lifecycles])


class EdgeCaseMineTests(MineTestCase):
    def test_single_commit(self):
        self.script.commit(ALICE, {"main.c": MAIN_C, "src/isr_1.c": handler_source(1)})
        result = self.mine()
        (lc,) = result.lifecycles
        self.assertFalse(lc.fixed)
        self.assertEqual((lc.norm_intro_commit, lc.norm_intro_day), (0.0, 0.0))
        self.assertEqual(result.metrics["loc_share"], {ALICE.id: 1.0})

    def test_empty_repository(self):
        result = self.mine()
        self.assertEqual((result.commits, result.lifecycles), ([], []))
        self.assertIsNone(result.metrics["head"])

    def test_not_a_repository(self):
        with self.assertRaises(RepoOpenError):
            mine_repo(Path(self.tmp.name) / "missing", CONFIG, write=False)

    def test_reports_directory_must_exist(self):
        self.script.commit(ALICE, {"main.c": MAIN_C})
        with self.assertRaises(InputError):
            self.mine(external_reports=Path(self.tmp.name) / "no-reports")


def fake_analyzer(tree_path, cfg):
    """Reports one unused variable in main.c, and times out when main.c asks it to."""
    source = (Path(tree_path) / "main.c").read_text(encoding="utf-8")
    if "TIMEOUT" in source:
        raise AnalyzerTimeout("cppcheck exceeded 120s", output="partial output")
    entry = ReportEntry("unusedVariable", "main.c", 3, "style", "Unused variable: x", "x")
    return ExternalReport(version="2.13.0", entries=[entry])


class ExternalAnalyzerMineTests(MineTestCase):
    def build(self, marker="// TIMEOUT\n"):
        self.script.commit(ALICE, {"main.c": MAIN_C})
        self.script.commit(BOB, {"main.c": MAIN_C + marker})
        self.script.commit(ALICE, {"main.c": MAIN_C + "// ok\n"})

    @mock.patch("quality.pipeline.run_external_analyzer", side_effect=fake_analyzer)
    @mock.patch("quality.pipeline.analyzer_version", return_value="2.13.0")
    def test_timeout_is_not_a_fix(self, version, analyzer):
        self.build()
        result = self.mine(use_external=True)

        (lc,) = result.lifecycles
        self.assertEqual((lc.rule_id, lc.source), ("unusedVariable", EXTERNAL))
        self.assertEqual(lc.present_in, [0, 2])
        self.assertFalse(lc.fixed)

        (failure,) = result.failures["failures"]
        self.assertEqual(failure["kind"], "AnalyzerTimeout")
        self.assertEqual((failure["commit"], failure["index"]), (self.script.commits[1].hash, 1))
        self.assertEqual(failure["output"], "partial output")
        self.assertEqual(result.failures["analyzer"], {"name": "cppcheck", "mode": RUN, "version": "2.13.0"})

        # the timed-out commit is retried next time
        self.assertEqual(
            set(CommitAnalysis.objects.values_list("commit_hash", flat=True)),
            {self.script.commits[0].hash, self.script.commits[2].hash},
        )
        self.assertEqual(analyzer.call_count, 3)

    @override_settings(EMBERMINE_EXTERNAL_PATH="/nonexistent/cppcheck")
    def test_unavailable_analyzer(self):
        self.build(marker="// plain\n")
        result = self.mine(use_external=True)
        self.assertEqual(result.lifecycles, [])
        (failure,) = result.failures["failures"]
        self.assertEqual((failure["commit"], failure["kind"]), (None, "AnalyzerUnavailable"))
        self.assertEqual(result.metrics["analyzer"]["mode"], UNAVAILABLE)
        self.assertEqual(CommitAnalysis.objects.count(), 3)

    def test_report_directory(self):
        self.build(marker="// plain\n")
        reports = Path(self.tmp.name) / "reports"
        reports.mkdir()
        xml = cppcheck_xml(cppcheck_error("unusedVariable", "main.c", 3, symbol="x"))
        for commit in (self.script.commits[0], self.script.commits[2]):
            (reports / f"{commit.hash}.xml").write_text(xml, encoding="utf-8")

        result = self.mine(external_reports=reports)
        (lc,) = result.lifecycles
        self.assertEqual(lc.present_in, [0, 2])
        self.assertFalse(lc.fixed)
        self.assertEqual([f["kind"] for f in result.failures["failures"]], ["ReportMissing"])
        self.assertEqual(result.metrics["analyzer"]["mode"], REPORTS)
        self.assertEqual(CommitAnalysis.objects.count(), 2)
