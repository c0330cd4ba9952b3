from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from ..errors import DataError, RetrievalError

CATALOG_FORMAT = "scenemap-catalog"
CATALOG_VERSION = 1


@dataclass(frozen=True)
class Asset:
    id: str
    category: int
    size: tuple[float, float, float]  # local (width, height, depth) in meters


class AssetCatalog:
    def __init__(self, entries):
        entries = list(entries)
        ids = [a.id for a in entries]
        if len(set(ids)) != len(ids):
            raise DataError("asset ids must be unique")
        for a in entries:
            if len(a.size) != 3 or min(a.size) <= 0:
                raise DataError(f"asset {a.id} has a non-positive size")
        self.entries = sorted(entries, key=lambda a: a.id)
        self._by_id = {a.id: a for a in self.entries}

    def __len__(self):
        return len(self.entries)

    def __getitem__(self, asset_id: str) -> Asset:
        return self._by_id[asset_id]

    def __contains__(self, asset_id: str) -> bool:
        return asset_id in self._by_id

    def for_category(self, category: int) -> list[Asset]:
        return [a for a in self.entries if a.category == category]

    def to_dict(self) -> dict:
        return {
            "format": CATALOG_FORMAT,
            "version": CATALOG_VERSION,
            "assets": [{"id": a.id, "category": a.category, "size": list(a.size)} for a in self.entries],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AssetCatalog":
        if d.get("format") != CATALOG_FORMAT or d.get("version") != CATALOG_VERSION:
            raise DataError("not a catalog record")
        return cls(Asset(e["id"], int(e["category"]), tuple(float(v) for v in e["size"])) for e in d["assets"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))

    @classmethod
    def load(cls, path) -> "AssetCatalog":
        return cls.from_dict(json.loads(Path(path).read_text()))


def size_mse(a, b) -> float:
    return sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)) / 3.0


def retrieve_asset(catalog: AssetCatalog, category: int, predicted_size) -> str:
    """Id of the same-category asset whose size has the lowest MSE; ties go to the smaller id."""
    candidates = catalog.for_category(category)
    if not candidates:
        raise RetrievalError(f"no assets for category {category}")
    return min(candidates, key=lambda a: (size_mse(predicted_size, a.size), a.id)).id
