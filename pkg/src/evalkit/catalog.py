"""Item catalog: the attribute store behind goal sampling and title matching."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Iterator, Mapping


@dataclass(frozen=True)
class CatalogItem:
    """One recommendable item with string-valued attributes.

    Attribute values may be single strings or lists of strings (e.g. several
    actors); ``values(slot)`` normalizes both to a tuple.
    """

    item_id: str
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not self.item_id:
            raise ValueError("catalog items need a non-empty id")

    def values(self, slot: str) -> tuple[str, ...]:
        value = self.attributes.get(slot)
        if value is None:
            return ()
        if isinstance(value, (list, tuple)):
            return tuple(str(v) for v in value)
        return (str(value),)

    def satisfies(self, slot: str, value: str) -> bool:
        return value in self.values(slot)

    def satisfies_all(self, constraints) -> bool:
        return all(self.satisfies(slot, value) for slot, value in constraints)


@dataclass(frozen=True)
class ItemCatalog:
    """An immutable collection of catalog items keyed by id."""

    items: tuple[CatalogItem, ...]

    def __post_init__(self):
        object.__setattr__(self, "items", tuple(self.items))
        if not self.items:
            raise ValueError("catalog must contain at least one item")
        seen: set[str] = set()
        for item in self.items:
            if item.item_id in seen:
                raise ValueError(f"duplicate catalog item id {item.item_id!r}")
            seen.add(item.item_id)

    def __len__(self) -> int:
        return len(self.items)

    def __iter__(self) -> Iterator[CatalogItem]:
        return iter(self.items)

    def get(self, item_id: str) -> CatalogItem | None:
        for item in self.items:
            if item.item_id == item_id:
                return item
        return None

    def slots(self) -> tuple[str, ...]:
        """All attribute names that appear on at least one item, sorted."""
        names: set[str] = set()
        for item in self.items:
            names.update(item.attributes.keys())
        return tuple(sorted(names))

    def titles(self) -> tuple[str, ...]:
        return tuple(item.item_id for item in self.items)

    def matching(self, constraints) -> tuple[CatalogItem, ...]:
        return tuple(i for i in self.items if i.satisfies_all(constraints))


def load_catalog(source) -> ItemCatalog:
    """Load a catalog from a JSON file path or parsed list.

    Expected shape: a list of objects, each with an ``id`` (or ``title``)
    key naming the item and any further keys as attributes.
    """
    if isinstance(source, (str, bytes)) or hasattr(source, "__fspath__"):
        with open(source, "r", encoding="utf-8") as handle:
            records = json.load(handle)
    else:
        records = source
    items = []
    for record in records:
        record = dict(record)
        item_id = record.pop("id", None) or record.pop("title", None)
        if not item_id:
            raise ValueError("catalog records need an 'id' or 'title' key")
        items.append(CatalogItem(item_id=str(item_id), attributes=record))
    return ItemCatalog(items=tuple(items))
