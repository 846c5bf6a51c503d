import json

import pytest

from sketchscene.config import TrainConfig
from sketchscene.dataset import DatasetConfig, generate_dataset
from sketchscene.train import train_stage1, train_stage2

TINY = DatasetConfig(train_scenes=12, val_scenes=4, test_scenes=6,
                     min_class_instances=2)


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    generate_dataset(11, TINY, root)
    return root


@pytest.fixture(scope="session")
def tiny_config():
    return TrainConfig(seed=5, stage1_iters=4, stage2_iters=4, stage3_iters=2,
                       batch_size=3, save_every=100)


@pytest.fixture(scope="session")
def tiny_run(tiny_dataset, tiny_config, tmp_path_factory):
    """Dataset + a short stage-1/stage-2 run, shared across suites."""
    out = tmp_path_factory.mktemp("run")
    s1 = train_stage1(tiny_dataset, tiny_config, out)
    s2 = train_stage2(tiny_dataset, tiny_config, out, olr_ckpt=s1)
    return {"data": tiny_dataset, "out": out, "stage1": s1, "stage2": s2,
            "config": tiny_config}


def read_log(path):
    return [json.loads(line) for line in path.read_text().splitlines()]
