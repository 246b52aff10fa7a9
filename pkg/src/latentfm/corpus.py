"""Rating-matrix ingestion, train/test splitting, and watch-history documents.

A dataset is a sparse set of (user, item, rating[, timestamp]) records with
dense index maps for users and items.  Watch histories are exported as
"documents": per user the time-ordered items they rated, per item the
time-ordered users who rated it.  These documents feed the latent-feature
trainers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, NamedTuple, Sequence

import numpy as np

from .errors import ParseError, UnsupportedPolicyError, ValidationError

FORMATS = ("movielens-colon", "tsv", "csv")

_DELIMS = {"movielens-colon": "::", "tsv": "\t", "csv": ","}


class RatingRecord(NamedTuple):
    """One interaction. `user`/`item` are dense indices inside a Dataset."""

    user: int
    item: int
    rating: float
    timestamp: int | None = None


@dataclass
class Dataset:
    """Sparse rating matrix with contiguous id maps.

    Records are stored as parallel arrays (dense user index, dense item
    index, rating, timestamp).  `timestamps` is None when the source file
    carried no time column.  There is at most one record per (user, item).
    """

    n_users: int
    n_items: int
    users: np.ndarray
    items: np.ndarray
    ratings: np.ndarray
    timestamps: np.ndarray | None
    scale: tuple[float, float]
    user_map: dict[str, int] = field(default_factory=dict)
    item_map: dict[str, int] = field(default_factory=dict)

    @property
    def n_records(self) -> int:
        return len(self.ratings)

    @property
    def has_timestamps(self) -> bool:
        return self.timestamps is not None

    def records(self) -> Iterator[RatingRecord]:
        for k in range(self.n_records):
            ts = int(self.timestamps[k]) if self.timestamps is not None else None
            yield RatingRecord(int(self.users[k]), int(self.items[k]),
                               float(self.ratings[k]), ts)

    def user_ids(self) -> list[str]:
        """External user ids ordered by dense index."""
        out = [""] * self.n_users
        for ext, idx in self.user_map.items():
            out[idx] = ext
        return out

    def item_ids(self) -> list[str]:
        out = [""] * self.n_items
        for ext, idx in self.item_map.items():
            out[idx] = ext
        return out

    def validate(self) -> None:
        if self.n_records:
            if int(self.users.max()) >= self.n_users:
                raise ValidationError("user index out of range")
            if int(self.items.max()) >= self.n_items:
                raise ValidationError("item index out of range")
        if len(set(self.user_map.values())) != len(self.user_map):
            raise ValidationError("user_map is not a bijection")
        if len(set(self.item_map.values())) != len(self.item_map):
            raise ValidationError("item_map is not a bijection")
        pairs = set(zip(self.users.tolist(), self.items.tolist()))
        if len(pairs) != self.n_records:
            raise ValidationError("duplicate (user, item) pair")

    def subset(self, idx: np.ndarray) -> "Dataset":
        """New Dataset over a subset of records, sharing maps and dimensions."""
        ts = self.timestamps[idx] if self.timestamps is not None else None
        return Dataset(self.n_users, self.n_items,
                       self.users[idx], self.items[idx], self.ratings[idx], ts,
                       self.scale, self.user_map, self.item_map)


@dataclass(frozen=True)
class UserDocument:
    """A user's train-set items ordered by ascending timestamp (ties by item)."""

    user: int
    items: list[int]


@dataclass(frozen=True)
class ItemDocument:
    """An item's train-set raters ordered by ascending timestamp (ties by user)."""

    item: int
    users: list[int]


def _split_line(line: str, fmt: str) -> list[str]:
    return [f.strip() for f in line.split(_DELIMS[fmt])]


def load_ratings(path, fmt: str, scale: tuple[float, float],
                 user_map: dict[str, int] | None = None,
                 item_map: dict[str, int] | None = None) -> Dataset:
    """Parse a ratings file into a Dataset.

    Lines are `user<sep>item<sep>rating[<sep>timestamp]` with sep "::" for
    movielens-colon, tab for tsv, comma for csv (csv files carry one header
    line, skipped).  Dense ids are assigned in first-appearance order unless
    preassigned maps are supplied (then unknown external ids are rejected).
    Duplicate (user, item) pairs keep the record with the latest timestamp,
    ties and untimed files keep the last occurrence.
    """
    if fmt not in FORMATS:
        raise ValidationError(f"unknown format {fmt!r}; expected one of {FORMATS}")
    r_min, r_max = scale
    fixed_maps = user_map is not None or item_map is not None
    umap: dict[str, int] = dict(user_map) if user_map else {}
    imap: dict[str, int] = dict(item_map) if item_map else {}

    users: list[int] = []
    items: list[int] = []
    ratings: list[float] = []
    stamps: list[int] = []
    has_ts: bool | None = None
    # winner per (u, i): (timestamp key, sequence) -> row position
    best: dict[tuple[int, int], tuple[int, int]] = {}
    keep: dict[tuple[int, int], int] = {}

    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    start = 0
    if fmt == "csv" and lines:
        start = 1  # header row
    row = 0
    for line_no in range(start, len(lines)):
        line = lines[line_no]
        if not line.strip():
            continue
        fields = _split_line(line, fmt)
        if len(fields) not in (3, 4):
            raise ParseError(path, line_no + 1,
                             f"expected 3 or 4 fields, got {len(fields)}")
        if has_ts is None:
            has_ts = len(fields) == 4
        elif has_ts != (len(fields) == 4):
            raise ParseError(path, line_no + 1, "inconsistent field count")
        u_ext, i_ext, r_str = fields[0], fields[1], fields[2]
        try:
            rating = float(r_str)
        except ValueError:
            raise ParseError(path, line_no + 1, f"bad rating {r_str!r}") from None
        if not (r_min <= rating <= r_max):
            raise ValidationError(
                f"{path}:{line_no + 1}: rating {rating} outside scale "
                f"[{r_min}, {r_max}]")
        ts = 0
        if has_ts:
            try:
                ts = int(fields[3])
            except ValueError:
                raise ParseError(path, line_no + 1,
                                 f"bad timestamp {fields[3]!r}") from None
            if ts < 0:
                raise ValidationError(
                    f"{path}:{line_no + 1}: negative timestamp {ts}")
        if u_ext not in umap:
            if fixed_maps:
                raise ValidationError(
                    f"{path}:{line_no + 1}: user {u_ext!r} not in supplied map")
            umap[u_ext] = len(umap)
        if i_ext not in imap:
            if fixed_maps:
                raise ValidationError(
                    f"{path}:{line_no + 1}: item {i_ext!r} not in supplied map")
            imap[i_ext] = len(imap)
        u, i = umap[u_ext], imap[i_ext]
        key = (u, i)
        cand = (ts, row)
        if key not in best or cand > best[key]:
            best[key] = cand
            keep[key] = row
        users.append(u)
        items.append(i)
        ratings.append(rating)
        stamps.append(ts)
        row += 1

    kept = sorted(keep.values())
    ts_arr = np.asarray(stamps, dtype=np.int64)[kept] if has_ts else None
    return Dataset(
        n_users=len(umap),
        n_items=len(imap),
        users=np.asarray(users, dtype=np.int32)[kept] if kept else np.empty(0, np.int32),
        items=np.asarray(items, dtype=np.int32)[kept] if kept else np.empty(0, np.int32),
        ratings=np.asarray(ratings, dtype=np.float64)[kept] if kept else np.empty(0),
        timestamps=ts_arr,
        scale=(float(r_min), float(r_max)),
        user_map=umap,
        item_map=imap,
    )


def split(ds: Dataset, policy: str, fraction: float,
          seed: int | None = None) -> tuple[Dataset, Dataset]:
    """Partition records into (train, test) sharing the parent's id maps.

    `random` shuffles record indices with the given seed and cuts off the
    first round(fraction * n) as test.  `chronological` orders each user's
    records by timestamp (ties by item index) and sends the latest
    fraction, rounded half-up per user, to test.
    """
    if not 0.0 < fraction < 1.0:
        raise ValidationError(f"fraction must be in (0, 1), got {fraction}")
    n = ds.n_records
    if policy == "random":
        rng = np.random.default_rng(seed)
        perm = rng.permutation(n)
        n_test = int(round(n * fraction))
        test_idx = np.sort(perm[:n_test])
        train_idx = np.sort(perm[n_test:])
    elif policy == "chronological":
        if not ds.has_timestamps:
            raise UnsupportedPolicyError(
                "chronological split requires timestamps")
        test_rows: list[int] = []
        order = {}
        for k in range(n):
            order.setdefault(int(ds.users[k]), []).append(k)
        for u, rows in order.items():
            rows.sort(key=lambda k: (int(ds.timestamps[k]), int(ds.items[k])))
            n_test_u = int(len(rows) * fraction + 0.5)
            test_rows.extend(rows[len(rows) - n_test_u:])
        mask = np.zeros(n, dtype=bool)
        mask[test_rows] = True
        test_idx = np.flatnonzero(mask)
        train_idx = np.flatnonzero(~mask)
    else:
        raise ValidationError(f"unknown split policy {policy!r}")
    return ds.subset(train_idx), ds.subset(test_idx)


def cold_start_mask(train: Dataset, test: Dataset) -> np.ndarray:
    """Flag test records whose user or item never appears in train."""
    warm_u = set(np.unique(train.users).tolist())
    warm_i = set(np.unique(train.items).tolist())
    out = np.zeros(test.n_records, dtype=bool)
    for k in range(test.n_records):
        if int(test.users[k]) not in warm_u or int(test.items[k]) not in warm_i:
            out[k] = True
    return out


def _history_order(ds: Dataset, rows: list[int], tie_key: np.ndarray) -> list[int]:
    # timestamps absent -> keep input (record) order
    if not ds.has_timestamps:
        return rows
    return sorted(rows, key=lambda k: (int(ds.timestamps[k]), int(tie_key[k])))


def build_user_documents(train: Dataset) -> list[UserDocument]:
    """One document per user with at least one train record, ascending user index."""
    by_user: dict[int, list[int]] = {}
    for k in range(train.n_records):
        by_user.setdefault(int(train.users[k]), []).append(k)
    docs = []
    for u in sorted(by_user):
        rows = _history_order(train, by_user[u], train.items)
        docs.append(UserDocument(u, [int(train.items[k]) for k in rows]))
    return docs


def build_item_documents(train: Dataset) -> list[ItemDocument]:
    """One document per item with at least one train record, ascending item index."""
    by_item: dict[int, list[int]] = {}
    for k in range(train.n_records):
        by_item.setdefault(int(train.items[k]), []).append(k)
    docs = []
    for i in sorted(by_item):
        rows = _history_order(train, by_item[i], train.users)
        docs.append(ItemDocument(i, [int(train.users[k]) for k in rows]))
    return docs


# ---------------------------------------------------------------------------
# artifact files: documents, id maps, ratings splits, dataset stats

def write_documents(docs: Sequence[UserDocument | ItemDocument], path) -> None:
    """One line per document: `doc_id: id id id ...`."""
    with open(path, "w", encoding="utf-8") as fh:
        for doc in docs:
            if isinstance(doc, UserDocument):
                doc_id, tokens = doc.user, doc.items
            else:
                doc_id, tokens = doc.item, doc.users
            fh.write(f"{doc_id}: {' '.join(str(t) for t in tokens)}\n")


def read_documents(path) -> list[tuple[int, list[int]]]:
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            head, _, tail = line.partition(":")
            try:
                doc_id = int(head)
                tokens = [int(t) for t in tail.split()]
            except ValueError:
                raise ParseError(path, line_no, "bad document line") from None
            out.append((doc_id, tokens))
    return out


def write_id_map(id_map: dict[str, int], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for ext, idx in sorted(id_map.items(), key=lambda kv: kv[1]):
            fh.write(f"{ext}\t{idx}\n")


def read_id_map(path) -> dict[str, int]:
    out: dict[str, int] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 2:
                raise ParseError(path, line_no, "bad id-map line")
            out[parts[0]] = int(parts[1])
    return out


def write_ratings(ds: Dataset, path) -> None:
    """Write a dataset back out as a tsv ratings file with external ids."""
    u_ids, i_ids = ds.user_ids(), ds.item_ids()
    with open(path, "w", encoding="utf-8") as fh:
        for rec in ds.records():
            cols = [u_ids[rec.user], i_ids[rec.item], repr(rec.rating)]
            if rec.timestamp is not None:
                cols.append(str(rec.timestamp))
            fh.write("\t".join(cols) + "\n")


def dataset_stats(ds: Dataset) -> dict:
    filled = ds.n_users * ds.n_items
    return {
        "n_users": ds.n_users,
        "n_items": ds.n_items,
        "n_records": ds.n_records,
        "scale": list(ds.scale),
        "has_timestamps": ds.has_timestamps,
        "density": (ds.n_records / filled) if filled else 0.0,
    }


def write_stats(stats: dict, path) -> None:
    Path(path).write_text(json.dumps(stats, indent=2, sort_keys=True) + "\n")
