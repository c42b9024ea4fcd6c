import numpy as np
import pytest

from alkdrec import dataset
from alkdrec.backbone import TrainConfig, init_model, train_bpr
from alkdrec.synth import planted_catalog, planted_log, planted_sessions


@pytest.fixture(scope="session")
def small_ds():
    seqs = planted_sessions(n_sessions=150, n_items=60, seed=3)
    sessions, id_map = dataset.filter_short(dataset.sessionize(planted_log(seqs)), 5)
    catalog = planted_catalog(60).remap(id_map)
    return dataset.split_sessions(sessions, (6, 2, 2), seed=0, n_items=len(id_map), catalog=catalog)


@pytest.fixture(scope="session")
def trained_pair(small_ds):
    train = small_ds.part("train")
    teacher, _ = train_bpr(init_model(small_ds.n_items, 16, 1, "teacher"), train, TrainConfig(learning_rate=0.01, batch_size=128, epochs=10, seed=1))
    student, _ = train_bpr(init_model(small_ds.n_items, 4, 2, "student"), train, TrainConfig(learning_rate=0.01, batch_size=128, epochs=10, seed=2))
    return teacher, student


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
