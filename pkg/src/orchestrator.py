"""
Orchestrator - Runs the selftest invariant suite as a LangGraph workflow.
"""

import time
from typing import Any, Callable, Dict

from langgraph.graph import END, StateGraph
from typing_extensions import TypedDict

from .checks import (
    AlignmentCheck,
    BaseCheck,
    ContainmentCheck,
    LossCheck,
    MaskRecoveryCheck,
    MemoryOrderingCheck,
    OracleEquivalenceCheck,
    RedundancyCheck,
    StitchCheck,
    SurrogateCheck,
)
from .config import SelftestConfig, config, log
from .fixtures import all_fixtures
from .models import CheckResult, SelftestReport
from .tools import ArtifactWriter


class GraphState(TypedDict, total=False):
    profile: str
    seed: int
    threads: int
    splat_radius_px: float
    fixtures: Dict[str, Any]
    voxel_cache: Dict[Any, Any]
    group_results: list
    errors: list
    timings: Dict[str, float]
    report: Any


def settings_for(profile: str) -> SelftestConfig:
    if profile == "quick":
        return config.quick_selftest
    if profile == "full":
        return config.selftest
    raise ValueError(f"Unknown selftest profile '{profile}'")


class SelftestOrchestrator:
    """Runs every invariant group in order and writes the per-group and final reports."""

    def __init__(self, writer: ArtifactWriter, profile: str = "full"):
        self.profile = profile
        self.settings = settings_for(profile)
        self.writer = writer
        self.checks = [
            ContainmentCheck(self.settings),
            MaskRecoveryCheck(self.settings),
            RedundancyCheck(self.settings),
            OracleEquivalenceCheck(self.settings),
            AlignmentCheck(self.settings),
            StitchCheck(self.settings),
            MemoryOrderingCheck(self.settings),
            LossCheck(self.settings),
            SurrogateCheck(self.settings),
        ]
        self.workflow = self._build_workflow()

    def _prepare_fixtures_node(self, state: GraphState) -> Dict[str, Any]:
        fixtures = all_fixtures()
        log("selftest", f"📦 {len(fixtures)} fixtures: {', '.join(fixtures)}")
        return {"fixtures": fixtures, "voxel_cache": {}}

    def _check_node(self, check: BaseCheck) -> Callable[[GraphState], Dict[str, Any]]:
        def node(state: GraphState) -> Dict[str, Any]:
            log("selftest", f"🔎 {check.group.upper()}")
            start = time.perf_counter()
            update = check.process(state)
            update["timings"] = {**state.get("timings", {}), check.group: round(time.perf_counter() - start, 6)}

            # Save individual group report
            self._save_group_report(update["group_results"][-1])
            return update

        return node

    def _save_group_report(self, result: CheckResult):
        self.writer.write_json(f"selftest/{result.group}.json", result)

    def _synthesize_report_node(self, state: GraphState) -> Dict[str, Any]:
        groups = state.get("group_results", [])
        errors = state.get("errors", [])
        report = SelftestReport(
            profile=state["profile"],
            seed=state["seed"],
            passed=bool(groups) and all(g.passed for g in groups) and not errors,
            groups=groups,
            errors=errors,
            timings=state.get("timings", {}),
        )
        # timings live in the manifest only, so reruns produce identical reports
        self.writer.write_json("selftest.json", report.model_dump(exclude={"timings"}))
        self.writer.write_text("selftest.md", self._generate_markdown(report))
        self.writer.timings.update({f"selftest.{k}": v for k, v in report.timings.items()})
        return {"report": report}

    @staticmethod
    def _generate_markdown(report: SelftestReport) -> str:
        status = "PASSED" if report.passed else "FAILED"
        lines = [
            "# voxup selftest",
            "",
            f"**Profile:** {report.profile}  ",
            f"**Seed:** {report.seed}  ",
            f"**Result:** {status}",
            "",
            "| group | result | summary |",
            "|---|---|---|",
        ]
        for g in report.groups:
            lines.append(f"| {g.group} | {'pass' if g.passed else 'FAIL'} | {g.summary} |")
        if report.errors:
            lines += ["", "## Errors", ""] + [f"- {e}" for e in report.errors]
        return "\n".join(lines) + "\n"

    def _build_workflow(self):
        """Build the LangGraph workflow."""
        workflow = StateGraph(GraphState)

        workflow.add_node("prepare_fixtures", self._prepare_fixtures_node)
        for check in self.checks:
            workflow.add_node(check.group, self._check_node(check))
        workflow.add_node("synthesize_report", self._synthesize_report_node)

        workflow.set_entry_point("prepare_fixtures")
        previous = "prepare_fixtures"
        for check in self.checks:
            workflow.add_edge(previous, check.group)
            previous = check.group
        workflow.add_edge(previous, "synthesize_report")
        workflow.add_edge("synthesize_report", END)

        return workflow.compile()

    def run(self, seed: int, threads: int = 1) -> SelftestReport:
        log("selftest", "=" * 60)
        log("selftest", f"🚀 voxup selftest (profile={self.profile}, seed={seed})")
        log("selftest", "=" * 60)

        initial_state: GraphState = {
            "profile": self.profile,
            "seed": seed,
            "threads": threads,
            "splat_radius_px": config.render.splat_radius_px,
            "group_results": [],
            "errors": [],
            "timings": {},
        }
        result = self.workflow.invoke(initial_state)
        report = result["report"]

        if report.errors:
            log("selftest", "⚠️  Errors encountered:", "WARNING")
            for error in report.errors:
                log("selftest", f"  - {error}", "WARNING")
        passed = sum(g.passed for g in report.groups)
        log("selftest", f"{'✅' if report.passed else '❌'} {passed}/{len(report.groups)} groups passed")
        return report
