import numpy as np
import pytest

from subband_cm.dsp import AudioSignal, CqtParams


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


@pytest.fixture(scope="session")
def small_params():
    # 3 octaves from 100 Hz: cheap enough for the O(K N_k) reference summation
    return CqtParams(f1=100.0, bins_per_octave=12, num_bins=36, sample_rate=16000, hop=160)


def tone(freq, seconds=1.0, sample_rate=16000, amplitude=1.0, phase=0.0):
    t = np.arange(int(round(seconds * sample_rate))) / sample_rate
    return AudioSignal(amplitude * np.cos(2 * np.pi * freq * t + phase), sample_rate)


def noise(rng, seconds=1.0, sample_rate=16000, scale=0.1):
    return AudioSignal(scale * rng.standard_normal(int(round(seconds * sample_rate))), sample_rate)


def rms_db(x):
    return 10 * np.log10(np.mean(np.asarray(x) ** 2))


# ---------------------------------------------------------------------------
# acceptance summary: one line per criterion
# ---------------------------------------------------------------------------

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title, budget): acceptance criterion membership")


def pytest_runtest_logreport(report):
    info = getattr(report, "criterion", None)
    if info is None:
        return
    number, title, budget = info
    entry = _CRITERIA.setdefault(number, {"title": title, "budget": budget, "seconds": 0.0,
                                          "outcomes": []})
    entry["seconds"] += report.duration
    if report.when == "call" or report.outcome != "passed":
        entry["outcomes"].append(report.outcome)


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    # tag every phase report; setup time of shared fixtures counts toward the criterion
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        number, title = marker.args[:2]
        outcome.get_result().criterion = (number, title, marker.kwargs.get("budget"))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        e = _CRITERIA[number]
        if all(o == "skipped" for o in e["outcomes"]):
            verdict = "SKIP"
        elif all(o in ("passed", "skipped") for o in e["outcomes"]):
            verdict = "PASS"
        else:
            verdict = "FAIL"
        over = e["budget"] is not None and e["seconds"] > e["budget"]
        if over and verdict == "PASS":
            verdict = "FAIL"
        budget = f" (budget {e['budget']:.0f} s{', exceeded' if over else ''})" if e["budget"] else ""
        terminalreporter.write_line(f"criterion {number} {verdict}: {e['title']} [{e['seconds']:.1f} s{budget}]")
