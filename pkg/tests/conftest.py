import numpy as np
import pytest

from shapespace.corpus import ingest
from shapespace.synth import synthesize_corpus, tube_mesh
from shapespace.vae import TrainingConfig, train


@pytest.fixture(scope="session")
def small_tube():
    return tube_mesh(rings=10, segments=10, radius=1.0, length=4.0)


@pytest.fixture(scope="session")
def toy_bend_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("bend_objs")
    synthesize_corpus("cylinder-bend", 16, 0, out, rings=10, segments=10)
    return out


@pytest.fixture(scope="session")
def toy_corpus(toy_bend_dir):
    return ingest(toy_bend_dir, base_index=0, split=0.8, seed=1)


@pytest.fixture(scope="session")
def toy_checkpoint(toy_corpus):
    config = TrainingConfig(latent_dim=4, hidden=(64,), epochs=500,
                            batch_size=8, seed=7)
    return train(config, toy_corpus)


@pytest.fixture(scope="session")
def twoclass_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("twoclass_objs")
    synthesize_corpus("two-class", 32, 3, out, rings=10, segments=10)
    return out


@pytest.fixture(scope="session")
def twoclass_corpus(twoclass_dir):
    return ingest(twoclass_dir, base_index=0, split=0.8, seed=2)


@pytest.fixture(scope="session")
def conditional_checkpoint(twoclass_corpus):
    config = TrainingConfig(latent_dim=4, hidden=(64,), epochs=500,
                            batch_size=8, seed=5)
    return train(config, twoclass_corpus)


@pytest.fixture()
def rng():
    return np.random.default_rng(1234)
