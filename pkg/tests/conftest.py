import warnings

import numpy as np
import pytest

from cuesync.core import Alphabet, Phoneme, PhonemeKind
from cuesync.synth import SynthConfig, generate_corpus


@pytest.fixture(scope="session")
def small_config():
    return SynthConfig(seed=11, n_sentences=24, syllables_per_sentence=(5, 8), n_vowels=4, n_consonants=3,
                       n_positions=2, n_shapes=3, hand_motion="glide")


@pytest.fixture(scope="session")
def small_corpus(small_config):
    return generate_corpus(small_config)


@pytest.fixture
def toy_alphabet():
    return Alphabet([Phoneme("sil", PhonemeKind.SILENCE), Phoneme("a", PhonemeKind.VOWEL),
                     Phoneme("i", PhonemeKind.VOWEL), Phoneme("p", PhonemeKind.CONSONANT),
                     Phoneme("t", PhonemeKind.CONSONANT)])


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(autouse=True)
def _quiet_runtime_warnings():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        yield


ACCEPTANCE = pytest.StashKey[list]()


@pytest.fixture
def acceptance_log(request):
    return request.config.stash.setdefault(ACCEPTANCE, [])


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE, [])
    if lines:
        terminalreporter.write_sep("=", "acceptance")
        for line in lines:
            terminalreporter.write_line(line)
