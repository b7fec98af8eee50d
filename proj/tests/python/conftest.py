import os
import random
from pathlib import Path

import pytest

DATA = Path(__file__).resolve().parent.parent / "data"
TOOLS = ["train", "translate", "rescore", "build-dict", "extract", "test-lm", "bpe-learn", "bpe-apply"]


@pytest.fixture(scope="session")
def bin_dir():
    d = os.environ.get("NMT_BIN_DIR")
    if not d:
        pytest.skip("NMT_BIN_DIR is not set")
    return Path(d)


def copy_corpus(path, n, seed, vocab=10, max_len=5):
    rng = random.Random(seed)
    words = [f"w{i}" for i in range(2, 2 + vocab)]
    lines = [" ".join(rng.choice(words) for _ in range(rng.randint(1, max_len))) for _ in range(n)]
    path.write_text("\n".join(lines) + "\n")
    return lines


def write_config(path, save_path, data, extra=""):
    path.write_text(
        f"""[training]
model_type: attention
valid_freq: 0
valid_metric: bleu
valid_beam: 3
max_epochs: 40
patience: 10
disp_freq: 0
seed: 5
[model]
save_path: {save_path}
rnn_dim: 16
embedding_dim: 16
batch_size: 8
lrate: 0.01
[model.data]
train_src: {data}/train.src
train_trg: {data}/train.trg
valid_src: {data}/valid.src
valid_trg: {data}/valid.trg
{extra}"""
    )
    return path
