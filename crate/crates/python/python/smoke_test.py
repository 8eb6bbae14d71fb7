"""Smoke test for the rvheal extension module."""

import json
import pathlib
import sys
import tempfile

import rvheal

SCENARIOS = pathlib.Path(__file__).resolve().parents[2] / "core" / "data" / "scenarios"


def check_formulas():
    f = rvheal.Formula("G(!isUnknown)")
    assert str(f) == "G !isUnknown", str(f)
    assert f.atoms() == ["isUnknown"]
    assert rvheal.parse_formula("a -> b U c") == "(a -> (b U c))"
    assert f.holds_on_lasso([], [[]])
    assert not f.holds_on_lasso([[]], [["isUnknown"]])
    try:
        rvheal.Formula("G((")
    except ValueError as e:
        assert "column" in str(e), e
    else:
        raise AssertionError("syntax error not raised")


def check_monitors():
    m = rvheal.Monitor("G(!isUnknown)")
    assert m.state_count == 2
    assert m.census() == {"inconclusive": 1, "bottom": 1}, m.census()
    q, v = m.step(m.initial, [])
    assert v == "inconclusive"
    q, v = m.step(q, ["isUnknown"])
    assert v == "bottom"
    assert m.run([[], ["isUnknown"], []]) == "bottom"
    assert m.satisfies_verdict_trap()
    assert m.to_dot().startswith("digraph monitor {")
    back = rvheal.Monitor.from_table(m.alphabet, m.to_table())
    assert back.to_table() == m.to_table()

    until = rvheal.Monitor("a U b")
    for trace in ([], [["a"]], [["b"]], [[]], [["a"], ["a", "b"]]):
        assert until.run(trace) == rvheal.oracle_verdict("a U b", trace), trace

    report, passed = rvheal.oracle_check(rvheal.BUNDLED_CORPUS, 4)
    assert passed, report


def check_controller():
    ctl = rvheal.Controller("rv", [(1, "CF2", "Query_Service")])
    assert ctl.run_iteration(0).diagnoses == []
    rec = ctl.run_iteration(1)
    assert rec.diagnoses == [("CF2", "Query_Service", "Query_Service")], rec
    assert rec.actions == ["Restart(Query_Service)", "Reconnect(bidbuy_query)"], rec
    assert rec.utility == rec.utility_before == ctl.utility()
    assert all(v == "inconclusive" for _, _, v in ctl.monitor_verdicts())
    assert len(ctl.monitor_verdicts()) == 35
    events = [json.loads(line) for line in ctl.events_jsonl().splitlines()]
    assert events[0]["kind"] == "ExceptionRaised"

    base = rvheal.Controller("baseline")
    for _ in range(3):
        base.raise_exception(0, "Query_Service")
    assert base.run_iteration(0).diagnoses == []
    base.raise_exception(1, "Query_Service")
    assert base.run_iteration(1).diagnoses[0][0] == "CF2"

    assert rvheal.random_schedule(42, 4, 20) == rvheal.random_schedule(42, 4, 20)


def check_scenarios():
    csv, events = rvheal.run_scenario(SCENARIOS / "four-failures.json")
    rows = [r for r in csv.splitlines()[2:] if r.split(",")[3]]
    assert [r.split(",")[3] for r in rows] == ["CF1", "CF2", "CF3", "CF4"], rows
    csv_b, events_b = rvheal.run_scenario(SCENARIOS / "four-failures.json", mode="baseline")
    assert events == events_b
    with tempfile.NamedTemporaryFile("w", suffix=".json") as bad:
        bad.write("{}")
        bad.flush()
        try:
            rvheal.run_scenario(bad.name)
        except ValueError:
            pass
        else:
            raise AssertionError("invalid scenario accepted")


def main():
    for check in (check_formulas, check_monitors, check_controller, check_scenarios):
        check()
        print(f"ok {check.__name__}")
    print("smoke test passed")
    return 0


if __name__ == "__main__":
    sys.exit(main())
