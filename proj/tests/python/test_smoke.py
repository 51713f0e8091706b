import json
import pathlib

import pytest

wnos = pytest.importorskip("wnos")

ROOT = pathlib.Path(__file__).resolve().parents[2]


def program(name):
    return str(ROOT / "programs" / f"{name}.wnos")


def scenario(name):
    return wnos.load_scenario(str(ROOT / "scenarios" / f"{name}.txt"))


def test_compile_matches_golden():
    c = wnos.compile_file(program("toy"))
    assert c.dump() == (ROOT / "tests/golden/toy_compile.txt").read_text()
    assert c.sense == "max"
    assert c.links_of_session(0) == [0, 1]


def test_errors_map_to_exception_types():
    with pytest.raises(wnos.ParseError):
        wnos.compile("nt.make_var('x', [ntses, sesrate]")
    with pytest.raises(wnos.FormatError):
        wnos.parse_scenario("bands = 0\n")
    with pytest.raises(wnos.WnosError):
        wnos.simulate(wnos.compile_file(program("cp1")), scenario("scenario1"), scheme="Bogus")


def test_simulate_and_compare():
    c = wnos.compile_file(program("cp1"))
    s = scenario("scenario2")
    run = wnos.simulate(c, s, duration=300, seed=3, record_state=True)
    assert run.slots == 300
    assert run.stats["transport_ticks"] == 10
    assert run.csv().startswith("slot,session_id,throughput_pps")
    json.loads(run.state_jsonl().splitlines()[0])
    again = wnos.simulate(c, s, duration=300, seed=3)
    assert again.csv() == run.csv()
    rows = wnos.compare(c, s, ["WNOS-T-P", "NoControl"], runs=2, duration=600)
    assert [r[0] for r in rows] == ["WNOS-T-P", "NoControl"]
    assert rows[1][2] == pytest.approx(0.0)
    assert set(wnos.schemes()) >= {"WNOS-T-P", "BestResponse"}
