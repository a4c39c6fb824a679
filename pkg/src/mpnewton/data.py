"""Datasets, train/test splits, confusion rates and synthetic normal-equation systems."""

from dataclasses import dataclass, field
from importlib import resources
import hashlib
import json
import logging
import os
import shutil
import urllib.request

import numpy as np

from . import linalg
from . import precision as P
from .precision import Tier

log = logging.getLogger(__name__)

CACHE_ENV = "MPNEWTON_CACHE"

# Bundled copies (from the keel-ds 0.2.5 distribution); the digests pin them.
BUNDLED = {
    "australian": ("australian.dat", "ccc64bf31674bc1c282e11f9ba2bb3c5777ca15f03e3d96142ed0817bf7fedce"),
    "mush": ("mushroom.dat", "5ba826112a0b61d6803bc82eb0c241e0eb66e4a6fe067c1854572513d543188f"),
}

UCI_URLS = {
    "australian": "https://archive.ics.uci.edu/ml/machine-learning-databases/statlog/australian/australian.dat",
    "mush": "https://archive.ics.uci.edu/ml/machine-learning-databases/mushroom/agaricus-lepiota.data",
}


class DatasetError(ValueError):
    pass


class ParseError(DatasetError):
    def __init__(self, path, line, msg):
        super().__init__(f"{path}:{line}: {msg}")
        self.line = line


@dataclass
class Dataset:
    name: str
    features: np.ndarray
    labels: np.ndarray
    feature_names: list
    provenance: dict = field(default_factory=dict)

    def subset(self, idx, suffix):
        return Dataset(f"{self.name}-{suffix}", self.features[idx], self.labels[idx],
                       list(self.feature_names), dict(self.provenance))

    def __len__(self):
        return len(self.labels)


def _canon(name):
    key = name.strip().lower()
    key = {"mushroom": "mush", "mushrooms": "mush", "agaricus-lepiota": "mush"}.get(key, key)
    if key not in BUNDLED:
        raise DatasetError(f"unknown dataset {name!r}; expected Australian or Mush")
    return key


def sha256_of(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def bundled_path(name):
    fname, _ = BUNDLED[_canon(name)]
    return str(resources.files("mpnewton") / "datasets" / fname)


def cache_dir(explicit=None):
    return explicit or os.environ.get(CACHE_ENV) or os.path.join(os.path.expanduser("~"), ".cache", "mpnewton")


def fetch(name, cache=None, url=None, sha256=None):
    """Place the raw file for ``name`` in the cache and return its path.

    Without ``url`` the bundled copy is used.  A remote file is accepted only
    when its digest matches ``sha256`` (or the bundled digest if none is given);
    on network failure an existing cached copy is returned.
    """
    key = _canon(name)
    fname, digest = BUNDLED[key]
    root = cache_dir(cache)
    os.makedirs(root, exist_ok=True)
    dest = os.path.join(root, fname)
    if url is None:
        if not (os.path.exists(dest) and sha256_of(dest) == digest):
            shutil.copyfile(bundled_path(key), dest)
        return dest
    want = sha256 or digest
    tmp = dest + ".part"
    try:
        with urllib.request.urlopen(url, timeout=30) as resp, open(tmp, "wb") as fh:
            shutil.copyfileobj(resp, fh)
    except OSError as exc:
        if os.path.exists(dest):
            log.warning("fetch of %s failed (%s); using cached %s", url, exc, dest)
            return dest
        raise DatasetError(f"could not fetch {url}: {exc}") from exc
    got = sha256_of(tmp)
    if got != want:
        os.remove(tmp)
        raise DatasetError(f"digest mismatch for {url}: {got}")
    os.replace(tmp, dest)
    return dest


def _read_rows(path):
    rows = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("@") or line.startswith("%"):
                continue
            parts = [p.strip() for p in (line.split(",") if "," in line else line.split())]
            rows.append((lineno, parts))
    if not rows:
        raise DatasetError(f"{path}: no data rows")
    return rows


def _standardize(cols, names, dropped):
    keep, keep_names = [], []
    for c, n in zip(cols, names):
        sd = c.std()
        if sd == 0.0:
            dropped.append(n)
            continue
        keep.append((c - c.mean()) / sd)
        keep_names.append(n)
    return keep, keep_names


def _parse_australian(path):
    rows = _read_rows(path)
    data = []
    for lineno, parts in rows:
        if len(parts) != 15:
            raise ParseError(path, lineno, f"expected 15 fields, got {len(parts)}")
        try:
            data.append([float(p) for p in parts])
        except ValueError as exc:
            raise ParseError(path, lineno, str(exc)) from None
    data = np.array(data)
    labels = data[:, -1]
    if not np.all(np.isin(labels, (0.0, 1.0))):
        raise DatasetError(f"{path}: labels must be 0/1")
    dropped = []
    cols, names = _standardize(list(data[:, :-1].T), [f"A{i + 1}" for i in range(14)], dropped)
    return cols, names, labels, {"dropped_columns": dropped, "scaling": "standardized"}


def _parse_mush(path):
    rows = _read_rows(path)
    width = len(rows[0][1])
    if width != 23:
        raise ParseError(path, rows[0][0], f"expected 23 fields, got {width}")
    class_first = all(parts[0] in ("e", "p") for _, parts in rows)
    feats, labels = [], []
    for lineno, parts in rows:
        if len(parts) != 23:
            raise ParseError(path, lineno, f"expected 23 fields, got {len(parts)}")
        cls = parts[0] if class_first else parts[-1]
        if cls not in ("e", "p"):
            raise ParseError(path, lineno, f"class must be e or p, got {cls!r}")
        feats.append(parts[1:] if class_first else parts[:-1])
        labels.append(1.0 if cls == "p" else 0.0)
    feats = np.array(feats)
    cols, names, encoding, dropped = [], [], {}, []
    for j in range(22):
        cats = sorted(set(feats[:, j]))  # '?' is simply another category
        encoding[f"c{j + 1}"] = cats
        if len(cats) == 1:
            dropped.append(f"c{j + 1}")
            continue
        for c in cats:
            cols.append((feats[:, j] == c).astype(float))
            names.append(f"c{j + 1}={c}")
    prov = {"dropped_columns": dropped, "encoding": encoding, "scaling": "one-hot",
            "layout": "class-first" if class_first else "class-last"}
    return cols, names, np.array(labels), prov


def load_dataset(name, source=None, cache=None) -> Dataset:
    """Load and preprocess Australian or Mush; a bias column of ones is appended.

    ``source`` may be a local path or a URL; by default the bundled copy is used.
    """
    key = _canon(name)
    if source is None:
        path = bundled_path(key)
        if sha256_of(path) != BUNDLED[key][1]:
            raise DatasetError(f"bundled {key} file does not match its pinned digest")
    elif str(source).startswith(("http://", "https://")):
        path = fetch(key, cache, url=str(source))
    else:
        path = str(source)
    cols, names, labels, prov = (_parse_australian if key == "australian" else _parse_mush)(path)
    for n in prov["dropped_columns"]:
        log.info("%s: dropped constant column %s", key, n)
    X = np.column_stack(cols + [np.ones(len(labels))])
    names = names + ["bias"]
    prov.update(source=os.path.basename(path), sha256=sha256_of(path), rows=len(labels))
    ds = Dataset("Australian" if key == "australian" else "Mush", X, labels, names, prov)
    if cache is not None or os.environ.get(CACHE_ENV):
        write_cache(ds, cache_dir(cache))
    return ds


def write_cache(ds, root):
    os.makedirs(root, exist_ok=True)
    stem = os.path.join(root, ds.name.lower() + "-preprocessed")
    np.savetxt(stem + ".csv", np.column_stack([ds.features, ds.labels]), delimiter=",",
               header=",".join(ds.feature_names + ["label"]), comments="", fmt="%.17g")
    with open(stem + ".json", "w") as fh:
        json.dump(ds.provenance, fh, indent=1, sort_keys=True)
    return stem


def split(ds, test_fraction=0.2, seed=0, _tries=20):
    """Stratified, seeded shuffle split into (train, test)."""
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    for attempt in range(_tries):
        rng = np.random.default_rng(seed + attempt)
        test = []
        for c in np.unique(ds.labels):
            idx = np.flatnonzero(ds.labels == c)
            idx = idx[rng.permutation(len(idx))]
            test.extend(idx[: int(round(test_fraction * len(idx)))])
        test = np.sort(np.array(test, dtype=int))
        train = np.setdiff1d(np.arange(len(ds)), test)
        if len(np.unique(ds.labels[train])) > 1 and len(np.unique(ds.labels[test])) > 1:
            return ds.subset(train, "train"), ds.subset(test, "test")
        log.warning("split with seed %d has a single-class side; trying seed %d", seed + attempt, seed + attempt + 1)
    raise DatasetError("could not produce a two-class split")


@dataclass
class ConfusionMatrix:
    tp_rate: float
    tn_rate: float
    fp_rate: float
    fn_rate: float
    undefined: tuple = ()


def confusion(predictions, labels, threshold=0.5) -> ConfusionMatrix:
    pred = np.asarray(predictions, float) >= threshold
    lab = np.asarray(labels)
    if pred.shape != lab.shape:
        raise ValueError("predictions and labels differ in length")
    if not np.all(np.isin(lab, (0, 1))):
        raise ValueError("labels must be binary")
    pos = lab == 1
    neg = ~pos
    undefined = []
    if pos.any():
        tp = float(np.mean(pred[pos]))
    else:
        tp = float("nan")
        undefined.append("positives")
    if neg.any():
        tn = float(np.mean(~pred[neg]))
    else:
        tn = float("nan")
        undefined.append("negatives")
    return ConfusionMatrix(tp, tn, 1.0 - tn, 1.0 - tp, tuple(undefined))


# ---------------------------------------------------------------------------
# extended normal-equation systems


@dataclass
class NormalEqSystem:
    A: np.ndarray
    S: np.ndarray
    b: np.ndarray
    x_star: np.ndarray
    sigma: np.ndarray
    sigma_S: np.ndarray
    seed: int

    def to_dict(self):
        return {k: (v.tolist() if isinstance(v, np.ndarray) else v) for k, v in self.__dict__.items()}

    @classmethod
    def from_dict(cls, d):
        arr = {k: np.asarray(d[k], float) for k in ("A", "S", "b", "x_star", "sigma", "sigma_S")}
        return cls(seed=d.get("seed"), **arr)


def _i(n):
    return np.arange(n, dtype=float)


# Singular values of the four reference systems (index i = 0..n-1).
STANDARD_SYSTEMS = {
    "pb1": (lambda n: 2.5 ** (_i(n) + 1), lambda n: (_i(n) + 1) * 1e-5),
    "pb2": (lambda n: 10.0 ** (_i(n) / 3 - 5), lambda n: (_i(n) + 1) * 1e-10),
    "pb3": (lambda n: 10.0 ** (_i(n) / 3 - 5), lambda n: (_i(n) + 1) * 1e5),
    "pb4": (lambda n: 10.0 ** (1 + _i(n) / 9), lambda n: 10.0 ** (-4 + 9 * _i(n) / 9)),
}


def default_x_star(n=10):
    return np.arange(n + 1, 1, -1, dtype=float)


def _orthonormal(rng, n):
    for _ in range(10):
        try:
            return linalg.qr_orthonormal(rng.standard_normal((n, n)))
        except linalg.RankDeficient:
            continue
    raise linalg.RankDeficient("could not draw a full-rank Gaussian matrix")


def generate_normal_eq_system(sigma, sigma_S, x_star=None, m=None, seed=0) -> NormalEqSystem:
    """Build ``A = U diag(sigma) V^T``, ``S = V_S diag(sigma_S^2) V_S^T`` and solve for b.

    All steps run in double precision.  For square A, ``A^T b = (A^T A + S) x*`` is
    solved by LU; for m > n the least-norm solution through the factors is used.
    """
    sigma = np.asarray(sigma, float)
    sigma_S = np.asarray(sigma_S, float)
    n = len(sigma)
    x_star = default_x_star(n) if x_star is None else np.asarray(x_star, float)
    m = n if m is None else m
    if len(sigma_S) != n or len(x_star) != n:
        raise ValueError("sigma, sigma_S and x_star must have equal length")
    if m < n:
        raise ValueError("need m >= n")
    if np.any(sigma <= 0):
        raise linalg.SingularMatrix("A^T is rank deficient: b would be underdetermined")
    rng = np.random.default_rng(seed)
    U = _orthonormal(rng, m)
    V = _orthonormal(rng, n)
    VS = _orthonormal(rng, n)
    A = (U[:, :n] * sigma) @ V.T
    S = (VS * sigma_S ** 2) @ VS.T
    S = (S + S.T) / 2
    rhs = A.T @ (A @ x_star) + S @ x_star
    if m == n:
        b = P.to_f64(linalg.lu_solve(A.T, rhs, Tier.P64))
    else:
        b = (U[:, :n] / sigma) @ (V.T @ rhs)
    return NormalEqSystem(A, S, b, x_star, sigma, sigma_S, seed)


def standard_system(name, n=10, seed=0) -> NormalEqSystem:
    key = name.strip().lower().replace(".", "").replace(" ", "")
    if key not in STANDARD_SYSTEMS:
        raise ValueError(f"unknown system {name!r}; expected one of {sorted(STANDARD_SYSTEMS)}")
    fs, fss = STANDARD_SYSTEMS[key]
    return generate_normal_eq_system(fs(n), fss(n), default_x_star(n), n, seed)
