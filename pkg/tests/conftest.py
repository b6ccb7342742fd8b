import numpy as np
import pytest

from speakerid.audio_io import make_speaker_profiles, write_corpus

CORPUS_SEED = 0


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def toy_profiles():
    return make_speaker_profiles(5, CORPUS_SEED)


@pytest.fixture(scope="session")
def toy_corpus(tmp_path_factory, toy_profiles):
    """5 speakers: 10 clean training phrases, 5 held-out phrases clean and at 10 dB."""
    root = tmp_path_factory.mktemp("toy")
    write_corpus(root / "train", toy_profiles, range(10), corpus_seed=CORPUS_SEED)
    write_corpus(root / "test", toy_profiles, range(10, 15), corpus_seed=CORPUS_SEED)
    write_corpus(root / "noisy", toy_profiles, range(10, 15), noise_snr_db=10.0,
                 corpus_seed=CORPUS_SEED)
    return root


@pytest.fixture(scope="session")
def enrolled(toy_corpus):
    """Default-settings enrollment on the toy training corpus."""
    from speakerid.identify import enroll
    return enroll(toy_corpus / "train")


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion(request):
    """Record one pass/fail line for an acceptance criterion.

    Use as ``with criterion("1", "clean corpus") as detail: ...``; the line is
    printed immediately and repeated in the terminal summary.
    """
    from contextlib import contextmanager

    @contextmanager
    def check(number, title):
        detail = {}
        try:
            yield detail
        except BaseException:
            _emit(number, title, "FAIL", detail)
            raise
        _emit(number, title, "PASS", detail)
    return check


def _emit(number, title, status, detail):
    extra = " ".join(f"{k}={v}" for k, v in detail.items())
    line = f"criterion {number} [{status}] {title}" + (f" ({extra})" if extra else "")
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
