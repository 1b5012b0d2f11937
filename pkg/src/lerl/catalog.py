"""Item/category universe and the binary item-category matrix."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from lerl.errors import DomainError, FormatError
from lerl.numeric import RngStream, as_generator

EMBED_INIT_RANGE = 0.1


@dataclass(frozen=True)
class ItemRecord:
    item_id: int
    category_id: int
    name: str | None = None


@dataclass(frozen=True, eq=False)
class Catalog:
    items: tuple[ItemRecord, ...]
    categories: tuple[str, ...]
    W: np.ndarray
    item_embeddings: np.ndarray
    _item_category: np.ndarray = field(repr=False, default=None)

    def __post_init__(self):
        n_items, n_cats = len(self.items), len(self.categories)
        if n_cats < 2:
            raise DomainError("a catalog needs at least two categories")
        if self.W.shape != (n_items, n_cats):
            raise DomainError(f"W has shape {self.W.shape}, expected {(n_items, n_cats)}")
        if not np.all((self.W == 0) | (self.W == 1)) or not np.all(self.W.sum(axis=1) == 1):
            raise DomainError("every W row must contain exactly one 1")
        for i, rec in enumerate(self.items):
            if rec.item_id != i:
                raise DomainError("item ids must be dense 0..|I|-1")
            if not 0 <= rec.category_id < n_cats:
                raise DomainError(f"item {i} references unknown category {rec.category_id}")
        for arr in (self.W, self.item_embeddings):
            arr.setflags(write=False)
        cat_of = np.array([r.category_id for r in self.items], dtype=np.int64)
        cat_of.setflags(write=False)
        object.__setattr__(self, "_item_category", cat_of)

    @property
    def n_items(self) -> int:
        return len(self.items)

    @property
    def n_categories(self) -> int:
        return len(self.categories)

    @property
    def item_category(self) -> np.ndarray:
        """Category id of every item, indexed by item id."""
        return self._item_category

    @property
    def embedding_dim(self) -> int:
        return self.item_embeddings.shape[1]

    def category_id(self, name: str) -> int:
        try:
            return self.categories.index(name)
        except ValueError:
            raise DomainError(f"unknown category {name!r}") from None

    def items_in(self, category_id: int) -> np.ndarray:
        return np.flatnonzero(self._item_category == category_id)

    def categories_of(self, item_ids: Iterable[int]) -> frozenset[int]:
        return frozenset(int(self._item_category[i]) for i in item_ids)

    def with_embeddings(self, dim: int, rng) -> "Catalog":
        return build_catalog(
            [r.category_id for r in self.items], self.categories, dim, rng,
            names=[r.name for r in self.items],
        )


def init_item_embeddings(n_items: int, dim: int, rng) -> np.ndarray:
    gen = as_generator(rng)
    return gen.uniform(-EMBED_INIT_RANGE, EMBED_INIT_RANGE, size=(n_items, dim))


def build_catalog(
    item_categories: Sequence[int],
    categories: Sequence[str],
    dim: int = 16,
    rng=None,
    names: Sequence[str | None] | None = None,
) -> Catalog:
    n_items, n_cats = len(item_categories), len(categories)
    W = np.zeros((n_items, n_cats), dtype=np.float64)
    for i, c in enumerate(item_categories):
        if not 0 <= c < n_cats:
            raise DomainError(f"item {i} references unknown category {c}")
        W[i, c] = 1.0
    names = names or [None] * n_items
    items = tuple(ItemRecord(i, int(c), names[i]) for i, c in enumerate(item_categories))
    emb = init_item_embeddings(n_items, dim, rng if rng is not None else RngStream(0, 0))
    return Catalog(items=items, categories=tuple(categories), W=W, item_embeddings=emb)


def parse_catalog_csv(text: str, dim: int = 16, rng=None) -> Catalog:
    """Parse ``item_id,category_name`` rows; the header line is optional."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if rows and rows[0][0].strip().lower() == "item_id":
        rows = rows[1:]
    if not rows:
        raise FormatError("catalog file has no item rows")
    categories: list[str] = []
    by_id: dict[int, int] = {}
    for lineno, row in enumerate(rows, 1):
        if len(row) != 2:
            raise FormatError(f"row {lineno}: expected 2 columns, got {len(row)}")
        try:
            item_id = int(row[0])
        except ValueError:
            raise FormatError(f"row {lineno}: item id {row[0]!r} is not an integer") from None
        name = row[1].strip()
        if not name:
            raise FormatError(f"row {lineno}: empty category name")
        if item_id in by_id:
            raise FormatError(f"duplicate item id {item_id}")
        if name not in categories:
            categories.append(name)
        by_id[item_id] = categories.index(name)
    if sorted(by_id) != list(range(len(by_id))):
        raise FormatError("item ids must be dense 0..N-1")
    if len(categories) < 2:
        raise FormatError("catalog needs at least two categories")
    return build_catalog([by_id[i] for i in range(len(by_id))], categories, dim, rng)


def load_catalog(path, dim: int = 16, rng=None) -> Catalog:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError:
        raise FormatError(f"catalog file not found: {path}") from None
    return parse_catalog_csv(text, dim, rng)


def write_catalog(catalog: Catalog, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("item_id,category_name\n")
        for rec in catalog.items:
            fh.write(f"{rec.item_id},{catalog.categories[rec.category_id]}\n")


def synthetic_catalog(n_items: int, n_categories: int, dim: int, rng) -> Catalog:
    """Balanced random assignment: every category gets floor or ceil of |I|/|C| items."""
    if n_categories < 2 or n_items < n_categories:
        raise DomainError("need n_categories >= 2 and n_items >= n_categories")
    gen = as_generator(rng)
    cats = np.arange(n_items) % n_categories
    gen.shuffle(cats)
    names = [f"cat{j}" for j in range(n_categories)]
    return build_catalog(cats.tolist(), names, dim, gen)


def category_indicator(catalog: Catalog, c_t: Iterable[int]) -> np.ndarray:
    out = np.zeros(catalog.n_categories, dtype=np.float64)
    for c in c_t:
        if not 0 <= c < catalog.n_categories:
            raise DomainError(f"category id {c} out of range")
        out[c] = 1.0
    return out


def category_mask(catalog: Catalog, c_t: Iterable[int]) -> np.ndarray:
    """Item mask ``W @ indicator(c_t)``."""
    return catalog.W @ category_indicator(catalog, c_t)
