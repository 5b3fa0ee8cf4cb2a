import os

import pytest
from hypothesis import HealthCheck, settings

from arot.features import compute_features
from arot.ingest import join_flights, label_flights, parse_directory
from arot.synthgen import generate_airport, load_profile

settings.register_profile(
    "arot", deadline=None, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("arot")


def pipeline(directory, airport, faf_nm=5.0):
    """Raw CSV directory -> FeatureResult."""
    bundle = parse_directory(directory)
    records, _ = join_flights(bundle)
    labelled, _ = label_flights(records)
    return compute_features(labelled, bundle.runway_table(), bundle.weather, airport, faf_distance=faf_nm)


@pytest.fixture(scope="session")
def small_dca(tmp_path_factory):
    """A 160-flight DCA sample: (raw dir, GeneratedAirport, FeatureResult)."""
    out = str(tmp_path_factory.mktemp("dca_small"))
    gen = generate_airport(load_profile("dca"), 160, 3, out)
    return out, gen, pipeline(out, "DCA")


@pytest.fixture(scope="session")
def triple_dirs(tmp_path_factory):
    """Raw CSV directories for full-size DCA/MIA/PHX samples at seed 7."""
    root = tmp_path_factory.mktemp("triple")
    out = {}
    for code in ("dca", "mia", "phx"):
        prof = load_profile(code)
        d = os.path.join(root, code.upper())
        generate_airport(prof, prof.flights, 7, d)
        out[code.upper()] = d
    return out


@pytest.fixture(scope="session")
def synthetic_triple(triple_dirs):
    """airport -> FeatureResult for the seed-7 triple."""
    return {ap: pipeline(d, ap) for ap, d in triple_dirs.items()}


ACCEPTANCE_KEY = pytest.StashKey[dict]()


@pytest.fixture
def criterion(request):
    """Record one acceptance line: criterion(number, ok, detail)."""
    results = request.config.stash.setdefault(ACCEPTANCE_KEY, {})

    def record(number, ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        results[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = config.stash.get(ACCEPTANCE_KEY, {})
    if results:
        terminalreporter.section("acceptance criteria")
        for number in sorted(results):
            terminalreporter.write_line(results[number])
