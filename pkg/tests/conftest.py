import pytest

from shotorder.dataforge.loader import SceneBank
from shotorder.dataforge.sequences import make_sequences, split_scenes, with_split
from shotorder.dataforge.synth import SynthParams, synth_scene


def synth_dataset(family, n, seed=0, params=SynthParams(), k=3):
    scenes = [synth_scene(family, params, seed=1000 * seed + i, scene_id=f"{family}-{seed}-{i:04d}") for i in range(n)]
    assignment = split_scenes([s.record.scene_id for s in scenes], seed=seed)
    samples = []
    for s in scenes:
        samples += make_sequences(s.record, k, 1, seed=seed)
    samples = with_split(samples, assignment)
    return scenes, SceneBank.from_synth(scenes), samples


@pytest.fixture(scope="session")
def tiny_ramp():
    return synth_dataset("ramp", 24)


@pytest.fixture(scope="session")
def tiny_grammar():
    return synth_dataset("grammar", 24)


# -- acceptance summary ---------------------------------------------------
# tests tagged @pytest.mark.criterion(n) report one PASS/FAIL line per criterion

_criteria: dict[int, list] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        ok = rep.passed and not hasattr(rep, "wasxfail")
        detail = dict(item.user_properties).get("detail", "")
        if hasattr(rep, "wasxfail"):
            detail = f"known false: {rep.wasxfail}"
        elif rep.failed:
            detail = (rep.longreprtext.strip().splitlines() or [""])[-1][:160]
        _criteria.setdefault(mark.args[0], []).append((item.name, ok, detail))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_criteria):
        rows = _criteria[n]
        status = "PASS" if all(ok for _, ok, _ in rows) else "FAIL"
        tr.write_line(f"criterion {n}: {status}")
        for name, ok, detail in rows:
            tr.write_line(f"    {'ok  ' if ok else 'FAIL'} {name} {detail}".rstrip())
