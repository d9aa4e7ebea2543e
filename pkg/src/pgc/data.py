"""Binary datasets: the comma-separated benchmark layout and basket files.

Twenty Datasets layout: ``<dir>/<name>.train.data``, ``.valid.data``,
``.test.data``; one sample per line, comma-separated 0/1 values.

Basket files: one registry per line, whitespace-separated 1-based item
indices (an empty line is an empty basket).
"""
from __future__ import annotations

import os
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import RefusalError

__all__ = ["Dataset", "ParseError", "load_binary_csv", "load_benchmark", "load_split", "save_binary_csv",
           "load_baskets", "save_baskets", "split", "MIN_VARIABLES"]

# registry categories below this many items are excluded from the benchmark
MIN_VARIABLES = 10


class ParseError(ValueError):
    def __init__(self, path, line, message):
        super().__init__(f"{path}:{line}: {message}")
        self.path, self.line = path, line


@dataclass
class Dataset:
    train: np.ndarray
    valid: np.ndarray
    test: np.ndarray
    name: str = ""

    def __post_init__(self):
        ns = {s.shape[1] for s in (self.train, self.valid, self.test) if s is not None and s.size}
        if len(ns) > 1:
            raise ValueError(f"splits disagree on the number of variables: {sorted(ns)}")

    @property
    def n(self):
        return self.train.shape[1]

    def splits(self):
        return {"train": self.train, "valid": self.valid, "test": self.test}


def _read_csv(path) -> np.ndarray:
    rows = []
    width = None
    with open(path) as f:
        for num, line in enumerate(f, 1):
            line = line.strip()
            if not line:
                continue
            toks = line.split(",")
            if any(t.strip() not in ("0", "1") for t in toks):
                raise ParseError(path, num, "values must be 0 or 1")
            if width is None:
                width = len(toks)
            elif len(toks) != width:
                raise ParseError(path, num, f"expected {width} values, got {len(toks)}")
            rows.append([int(t) for t in toks])
    if not rows:
        raise RefusalError(f"{path}: no samples")
    return np.array(rows, dtype=np.int8)


def load_binary_csv(train_path, valid_path, test_path, name="") -> Dataset:
    return Dataset(_read_csv(train_path), _read_csv(valid_path), _read_csv(test_path), name)


def load_benchmark(directory, name) -> Dataset:
    """Load ``<directory>/<name>.{train,valid,test}.data``."""
    paths = [os.path.join(directory, f"{name}.{s}.data") for s in ("train", "valid", "test")]
    return load_binary_csv(*paths, name=name)


def load_split(directory, name, which) -> np.ndarray:
    """One split, ``<directory>/<name>.<which>.data``."""
    return _read_csv(os.path.join(directory, f"{name}.{which}.data"))


def save_binary_csv(X, path):
    with open(path, "w") as f:
        for row in np.asarray(X, dtype=int):
            f.write(",".join(map(str, row)) + "\n")


def load_baskets(path, n: int) -> np.ndarray:
    if n < MIN_VARIABLES:
        warnings.warn(f"{path}: {n} items; the benchmark omits categories with fewer than "
                      f"{MIN_VARIABLES}", stacklevel=2)
    rows = []
    with open(path) as f:
        for num, line in enumerate(f, 1):
            row = np.zeros(n, dtype=np.int8)
            for tok in line.replace(",", " ").split():
                try:
                    i = int(tok)
                except ValueError:
                    raise ParseError(path, num, f"bad item index {tok!r}") from None
                if not 1 <= i <= n:
                    raise ParseError(path, num, f"item {i} outside 1..{n}")
                row[i - 1] = 1
            rows.append(row)
    return np.array(rows, dtype=np.int8).reshape(-1, n)


def save_baskets(X, path):
    with open(path, "w") as f:
        for row in np.asarray(X):
            f.write(" ".join(str(i + 1) for i in np.flatnonzero(row)) + "\n")


def split(rows, seed: int, name: str = "") -> Dataset:
    """Shuffle, then cut 70% / 10% / 20% (sizes floor(0.7N), floor(0.1N), rest).

    The shuffle is ``numpy.random.Generator(PCG64(seed)).permutation``.
    """
    rows = np.asarray(rows)
    N = len(rows)
    if N < 10:
        raise RefusalError(f"need at least 10 rows to split, got {N}")
    perm = np.random.Generator(np.random.PCG64(seed)).permutation(N)
    a, b = (7 * N) // 10, N // 10
    return Dataset(rows[perm[:a]], rows[perm[a:a + b]], rows[perm[a + b:]], name)
