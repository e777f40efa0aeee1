"""Object descriptions, 768-d description embeddings, cosine similarity and k-means++.

Descriptions and embeddings come from providers.  Remote providers talk JSON
over HTTP; the fixture provider replays a bundled JSON-lines file so that
everything runs offline.
"""

from __future__ import annotations

import hashlib
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Optional, Protocol, Sequence, Union

import numpy as np

EMBEDDING_DIM = 768
DEFAULT_PROMPT_TEMPLATE = (
    "Describe the household object '{name}', including its typical room, purpose, and related objects."
)
MAX_ITER = 300
N_INIT = 10


class ProviderError(RuntimeError):
    """The provider could not be reached or answered with something unusable."""


class MissingFixtureEntry(ProviderError, KeyError):
    def __init__(self, name: str):
        super().__init__(f"no fixture entry for {name!r}")
        self.name = name

    def __str__(self):
        return self.args[0]


class DimensionMismatch(ValueError):
    pass


class ZeroVectorError(ValueError):
    pass


@dataclass(frozen=True)
class ObjectDescription:
    proposition: str
    display_name: str
    description: str

    def __post_init__(self):
        if not self.description.strip():
            raise ValueError(f"empty description for {self.proposition}")


class DescriptionProvider(Protocol):
    def describe(self, display_name: str) -> str: ...


class EmbeddingProvider(Protocol):
    def embed(self, text: str) -> Sequence[float]: ...


# ---------------------------------------------------------------------------
# providers

def default_fixture_path() -> Path:
    return Path(str(resources.files("auxtasks.data").joinpath("homegrid_objects.jsonl")))


class FixtureProvider:
    """Replays descriptions and embeddings from a JSON-lines fixture file."""

    def __init__(self, path: Union[str, Path, None] = None):
        self.path = Path(path) if path is not None else default_fixture_path()
        if not self.path.exists():
            raise ProviderError(f"fixture file not found: {self.path}")
        self.records = read_jsonl(self.path)
        self._by_name = {r["display_name"]: r for r in self.records}
        self._by_text = {r["description"]: r for r in self.records if "embedding" in r}

    def describe(self, display_name: str) -> str:
        try:
            return self._by_name[display_name]["description"]
        except KeyError:
            raise MissingFixtureEntry(display_name) from None

    def embed(self, text: str) -> list[float]:
        try:
            return self._by_text[text]["embedding"]
        except KeyError:
            raise MissingFixtureEntry(text[:60]) from None


class _RemoteBase:
    def __init__(self, url: str, token_env: Optional[str] = None, client=None, timeout: float = 30.0):
        import httpx

        self.url = url
        self.token_env = token_env
        self.client = client if client is not None else httpx.Client(timeout=timeout)

    def _post(self, body: dict) -> dict:
        import httpx

        headers = {}
        if self.token_env:
            token = os.environ.get(self.token_env)
            if token:
                headers["Authorization"] = f"Bearer {token}"
        try:
            resp = self.client.post(self.url, json=body, headers=headers)
            resp.raise_for_status()
            return resp.json()
        except httpx.HTTPError as exc:
            raise ProviderError(f"provider at {self.url} unreachable: {exc}") from exc
        except ValueError as exc:
            raise ProviderError(f"malformed provider response from {self.url}") from exc


class RemoteDescriptionProvider(_RemoteBase):
    """POST ``{"object", "prompt_template"}`` -> ``{"description"}``."""

    def __init__(self, url: str, prompt_template: str = DEFAULT_PROMPT_TEMPLATE, **kw):
        super().__init__(url, **kw)
        self.prompt_template = prompt_template

    def describe(self, display_name: str) -> str:
        data = self._post({"object": display_name, "prompt_template": self.prompt_template})
        desc = data.get("description") if isinstance(data, dict) else None
        if not isinstance(desc, str) or not desc.strip():
            raise ProviderError(f"malformed description response for {display_name!r}")
        return desc


class RemoteEmbeddingProvider(_RemoteBase):
    """POST ``{"text"}`` -> ``{"embedding": [768 numbers]}``."""

    def embed(self, text: str) -> list[float]:
        data = self._post({"text": text})
        vec = data.get("embedding") if isinstance(data, dict) else None
        if not isinstance(vec, list) or not all(isinstance(v, (int, float)) for v in vec):
            raise ProviderError("malformed embedding response")
        return [float(v) for v in vec]


class StubEmbeddingProvider:
    """Deterministic pseudo-random unit vector seeded by a hash of the text."""

    def __init__(self, dim: int = EMBEDDING_DIM):
        self.dim = dim

    def embed(self, text: str) -> list[float]:
        seed = int.from_bytes(hashlib.sha256(text.encode()).digest()[:8], "little")
        v = np.random.default_rng(seed).standard_normal(self.dim)
        return (v / np.linalg.norm(v)).tolist()


class LexicalEmbeddingProvider:
    """Hashed bag-of-words vectors (stop words removed, L2-normalised).

    Used to build the bundled fixtures without a neural encoder.
    """

    def __init__(self, dim: int = EMBEDDING_DIM):
        from sklearn.feature_extraction.text import HashingVectorizer

        self.dim = dim
        self._vec = HashingVectorizer(
            n_features=dim, alternate_sign=False, norm="l2", stop_words="english"
        )

    def embed(self, text: str) -> list[float]:
        return self._vec.transform([text]).toarray()[0].tolist()


# ---------------------------------------------------------------------------
# store + cache

@dataclass(frozen=True, eq=False)
class EmbeddingStore:
    """Proposition -> (description, embedding) for every environment object."""

    entries: Mapping[str, tuple[ObjectDescription, np.ndarray]]

    def __post_init__(self):
        dims = {v.shape for _, v in self.entries.values()}
        if len(dims) > 1:
            raise DimensionMismatch(f"mixed embedding shapes {sorted(dims)}")
        for p, (_, v) in self.entries.items():
            if not np.all(np.isfinite(v)):
                raise ValueError(f"non-finite embedding for {p}")

    @property
    def propositions(self) -> list[str]:
        return sorted(self.entries)

    def __contains__(self, p: str) -> bool:
        return p in self.entries

    def __len__(self) -> int:
        return len(self.entries)

    def vector(self, p: str) -> np.ndarray:
        return self.entries[p][1]

    def description(self, p: str) -> ObjectDescription:
        return self.entries[p][0]

    def matrix(self) -> np.ndarray:
        return np.stack([self.entries[p][1] for p in self.propositions])

    @classmethod
    def from_vectors(cls, vectors: Mapping[str, Sequence[float]]) -> "EmbeddingStore":
        """Store with placeholder descriptions, mostly for tests and synthetic data."""
        return cls({
            p: (ObjectDescription(p, p, f"object {p}"), np.asarray(v, dtype=float))
            for p, v in vectors.items()
        })

    def records(self) -> list[dict]:
        out = []
        for p in self.propositions:
            d, v = self.entries[p]
            out.append({
                "proposition": d.proposition,
                "display_name": d.display_name,
                "description": d.description,
                "embedding": [float(x) for x in v],
            })
        return out

    def save(self, path: Union[str, Path]) -> None:
        write_jsonl(path, self.records())

    @classmethod
    def load(cls, path: Union[str, Path], propositions: Optional[Iterable[str]] = None) -> "EmbeddingStore":
        entries = {}
        for r in read_jsonl(path):
            if "embedding" not in r:
                continue
            d = ObjectDescription(r["proposition"], r["display_name"], r["description"])
            entries[d.proposition] = (d, np.asarray(r["embedding"], dtype=float))
        if propositions is not None:
            wanted = set(propositions)
            missing = wanted - set(entries)
            if missing:
                raise MissingFixtureEntry(sorted(missing)[0])
            entries = {p: entries[p] for p in sorted(wanted)}
        return cls(entries)


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    with open(path) as fh:
        return [json.loads(line) for line in fh if line.strip()]


def write_jsonl(path: Union[str, Path], records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


def _as_pairs(objects) -> list[tuple[str, str]]:
    pairs = []
    for o in objects:
        if isinstance(o, str):
            pairs.append((o, o))
        elif hasattr(o, "proposition"):
            pairs.append((o.proposition, o.display_name))
        else:
            pairs.append(tuple(o))
    return pairs


def describe_objects(
    objects,
    provider: DescriptionProvider,
    cache_path: Union[str, Path, None] = None,
    max_workers: int = 8,
) -> list[ObjectDescription]:
    """One description per object.

    ``objects`` holds display names, ``(proposition, display_name)`` pairs,
    or map placements.  Calls may run concurrently; the cache is written once
    all answers are in.
    """
    pairs = _as_pairs(objects)
    if not pairs:
        return []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        texts = list(pool.map(provider.describe, [name for _, name in pairs]))
    out = [ObjectDescription(p, name, text) for (p, name), text in zip(pairs, texts)]
    if cache_path is not None:
        write_jsonl(cache_path, [
            {"proposition": d.proposition, "display_name": d.display_name, "description": d.description}
            for d in out
        ])
    return out


def embed(
    descriptions: Sequence[ObjectDescription],
    provider: EmbeddingProvider,
    cache_path: Union[str, Path, None] = None,
    dim: int = EMBEDDING_DIM,
    max_workers: int = 8,
) -> EmbeddingStore:
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        vectors = list(pool.map(provider.embed, [d.description for d in descriptions]))
    entries = {}
    for d, v in zip(descriptions, vectors):
        arr = np.asarray(v, dtype=float)
        if arr.shape != (dim,):
            raise DimensionMismatch(f"{d.proposition}: expected {dim}-d embedding, got shape {arr.shape}")
        entries[d.proposition] = (d, arr)
    store = EmbeddingStore(entries)
    if cache_path is not None:
        store.save(cache_path)
    return store


def cosine_similarity(u, v) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        raise ZeroVectorError("cosine similarity of a zero vector is undefined")
    return float(np.clip(np.dot(u, v) / (nu * nv), -1.0, 1.0))


# ---------------------------------------------------------------------------
# k-means++

@dataclass(frozen=True, eq=False)
class ClusterModel:
    k: int
    centroids: np.ndarray
    assignment: Mapping[str, int]
    inertia: float
    inertia_history: tuple = field(default=(), repr=False)
    n_iter: int = 0

    def members(self, index: int) -> list[str]:
        return sorted(p for p, c in self.assignment.items() if c == index)

    def same(self, other: "ClusterModel") -> bool:
        return (
            self.k == other.k
            and dict(self.assignment) == dict(other.assignment)
            and np.array_equal(self.centroids, other.centroids)
            and self.inertia == other.inertia
            and self.inertia_history == other.inertia_history
        )


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_plus_plus_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """First centre uniform, each next one drawn with probability ~ D(x)^2."""
    n = len(points)
    chosen = [int(rng.integers(n))]
    d2 = _sq_dists(points, points[chosen]).min(axis=1)
    for _ in range(1, k):
        total = d2.sum()
        if total > 0:
            idx = int(rng.choice(n, p=d2 / total))
        else:
            rest = [i for i in range(n) if i not in chosen]
            idx = int(rest[rng.integers(len(rest))])
        chosen.append(idx)
        d2 = np.minimum(d2, _sq_dists(points, points[[idx]])[:, 0])
    return points[chosen].copy()


def lloyd(points: np.ndarray, centroids: np.ndarray, max_iter: int = MAX_ITER):
    """Lloyd iterations until assignments stop changing.

    Returns ``(labels, centroids, inertia_history)``; the history holds the
    inertia after every iteration and never increases.  A cluster that ends
    up empty is re-seeded at the point farthest from its own centroid.
    """
    k = len(centroids)
    centroids = centroids.copy()
    labels = None
    history = []
    for _ in range(max_iter):
        d2 = _sq_dists(points, centroids)
        new = d2.argmin(axis=1)
        for c in range(k):
            if not np.any(new == c):
                own = d2[np.arange(len(points)), new]
                # only steal from clusters that keep at least one point
                sizes = np.bincount(new, minlength=k)
                own = np.where(sizes[new] > 1, own, -1.0)
                far = int(own.argmax())
                new[far] = c
                centroids[c] = points[far]
        for c in range(k):
            centroids[c] = points[new == c].mean(axis=0)
        history.append(float(_sq_dists(points, centroids)[np.arange(len(points)), new].sum()))
        if labels is not None and np.array_equal(new, labels):
            labels = new
            break
        labels = new
    return labels, centroids, history


def kmeans_points(points: np.ndarray, k: int, seed: int, max_iter: int = MAX_ITER, n_init: int = 1):
    """Best of ``n_init`` seeded k-means++ runs (lowest final inertia, first on ties)."""
    points = np.asarray(points, dtype=float)
    if not 1 <= k <= len(points):
        raise ValueError(f"k={k} out of range for {len(points)} points")
    if n_init < 1:
        raise ValueError("n_init must be >= 1")
    rng = np.random.default_rng(seed)
    best = None
    for _ in range(n_init):
        init = kmeans_plus_plus_init(points, k, rng)
        run = lloyd(points, init, max_iter)
        if best is None or run[2][-1] < best[2][-1]:
            best = run
    return best


def kmeans(store: EmbeddingStore, k: int, seed: int, max_iter: int = MAX_ITER, n_init: int = N_INIT) -> ClusterModel:
    """Cluster the store's vectors (Euclidean) with k-means++ seeding."""
    props = store.propositions
    if not 1 <= k <= len(props):
        raise ValueError(f"k={k} out of range for {len(props)} objects")
    labels, centroids, history = kmeans_points(store.matrix(), k, seed, max_iter, n_init)
    return ClusterModel(
        k=k,
        centroids=centroids,
        assignment={p: int(c) for p, c in zip(props, labels)},
        inertia=history[-1],
        inertia_history=tuple(history),
        n_iter=len(history),
    )


def cluster_members(model: ClusterModel, p: str) -> list[str]:
    if p not in model.assignment:
        raise KeyError(f"unknown proposition {p!r}")
    return model.members(model.assignment[p])


def cluster_csv(model: ClusterModel) -> str:
    lines = ["proposition,cluster"]
    lines += [f"{p},{c}" for p, c in sorted(model.assignment.items())]
    return "\n".join(lines) + "\n"
