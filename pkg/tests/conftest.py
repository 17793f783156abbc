import numpy as np
import pytest


def numerical_grad(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar ``f()`` w.r.t. array ``x`` (mutated in place)."""
    g = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        i = it.multi_index
        old = x[i]
        x[i] = old + h
        fp = f()
        x[i] = old - h
        fm = f()
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    denom = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def synthetic_client(cid: str, d: int, c: int = 2, n: int = 30, seed: int = 0, n_val: int = 8):
    """A small learnable ClientDataset with ``d`` numeric features."""
    from fedlayers.data.encoders import fit_label_encoder
    from fedlayers.data.types import ClientDataset
    from fedlayers.model import FeatureSchema

    r = np.random.default_rng(seed)
    w = r.normal(size=(d, c))

    def draw(m):
        X = r.normal(size=(m, d))
        y = (X @ w).argmax(axis=1)
        y[: min(c, m)] = np.arange(min(c, m))  # every class present
        return X, y.astype(np.int64)

    schema = FeatureSchema.from_pairs([(f"{cid}_f{j}", "numeric") for j in range(d)], c)
    (Xtr, ytr), (Xva, yva), (Xte, yte) = draw(n), draw(n_val), draw(n_val)
    return ClientDataset(cid, schema, Xtr, ytr, Xva, yva, Xte, yte, fit_label_encoder(list(range(c))))


TINY = dict(embedding_dim=4, blocks=1, heads=2, hidden=8)
