import pytest

from polenav.world import DomainShiftParams, WorldConfig, derive_domain, generate_world

SMALL_WORLD = WorldConfig(route_length=60.0, n_poles=5, vocab_size=120, words_per_image=20, seed=3)
TRAIN_SHIFT = DomainShiftParams(p_word_remap=0.1, p_word_drop=0.1, p_pole_drop=0.02,
                                bearing_noise_sigma=2.0, likelihood_noise_sigma=0.05, domain_seed=11)
TEST_SHIFT = DomainShiftParams(p_word_remap=0.3, p_word_drop=0.1, p_pole_drop=0.05,
                               bearing_noise_sigma=4.0, likelihood_noise_sigma=0.1, domain_seed=12)


@pytest.fixture(scope="session")
def small_world():
    return generate_world(SMALL_WORLD)


@pytest.fixture(scope="session")
def train_domain(small_world):
    return derive_domain(small_world, TRAIN_SHIFT)


@pytest.fixture(scope="session")
def test_domain(small_world):
    return derive_domain(small_world, TEST_SHIFT)
