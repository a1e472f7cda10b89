"""The eleven acceptance criteria at their stated sizes and tolerances.

Each criterion prints one PASS/FAIL line (also collected into the
"acceptance criteria" section of the pytest summary).
"""

import json

import pytest

from conftest import ACCEPTANCE_LINES
from zextavg.acceptance import BUDGETS, CRITERIA, MASTER_SEED, run_criterion
from zextavg.cli import main


@pytest.mark.parametrize("k", sorted(CRITERIA))
def test_criterion(k):
    res = run_criterion(k, MASTER_SEED)
    line = res.line()
    if not res.within_budget:
        line += f" [over the {BUDGETS[k]}s budget]"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert res.passed, line


def test_verify_on_the_shipped_config(tmp_path, capsys):
    code = main(["verify", "--out", str(tmp_path)])
    report = json.loads((tmp_path / "verify_report.json").read_text())
    assert code == 0
    assert report["all_passed"]
    assert [c["number"] for c in report["criteria"]] == sorted(CRITERIA)
    assert report["master_seed"] == MASTER_SEED
    assert len(report["provenance"]["config_hash"]) == 64
