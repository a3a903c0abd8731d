import random
import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from anchorvote.crypto import TOY_GROUP, generate_rsa_key

import helpers


@pytest.fixture(scope="session")
def rsa_2048():
    return generate_rsa_key(2048)


@pytest.fixture(scope="session")
def rsa_small():
    """512-bit key: real enough for protocol tests, fast to sign with."""
    return generate_rsa_key(512)


@pytest.fixture
def toy_group():
    return TOY_GROUP


@pytest.fixture
def rng():
    return random.Random(0xA11CE)


@pytest.fixture(scope="session")
def toy_keys():
    return helpers.make_keys(n_validators=4)


@pytest.fixture
def toy_config(toy_keys):
    registrar_key, validator_keys = toy_keys
    return helpers.make_config(registrar_key, validator_keys)


@pytest.fixture
def toy_chain(toy_keys, toy_config):
    _, validator_keys = toy_keys
    return helpers.fresh_chain(toy_config, validator_keys)
