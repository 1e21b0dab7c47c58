import runpy
from pathlib import Path

DEMOS = Path(__file__).resolve().parent.parent / "demos"


def test_walkthrough_runs(capsys):
    runpy.run_path(str(DEMOS / "walkthrough.py"), run_name="__main__")
    out = capsys.readouterr().out
    assert "1.5s,2,1," in out and "2.0s,3,2," in out
