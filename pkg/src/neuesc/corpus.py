"""NEU-ESC corpus loading, splitting, and descriptive statistics.

The dataset is a collection of Vietnamese student comments, each carrying
both a sentiment label (4 classes) and a topic label (10 classes). On disk
it is line-delimited JSON with fields {id, text, sentiment, topic, split}.
"""

from __future__ import annotations

import json
import unicodedata
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import IntEnum
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np


class Sentiment(IntEnum):
    NEUTRAL = 0
    POSITIVE = 1
    NEGATIVE = 2
    TOXIC = 3


class Topic(IntEnum):
    SPAM = 0
    NEWS = 1
    ACADEMIC = 2
    OTHER = 3
    SERVICE = 4
    JOBS_RECRUITMENT = 5
    PERSONAL_AFFAIRS = 6
    SOCIAL_AFFAIRS = 7
    HELP_SHARE = 8
    CLUB_EVENTS = 9


SENTIMENT_NAMES = {
    Sentiment.NEUTRAL: "Neutral",
    Sentiment.POSITIVE: "Positive",
    Sentiment.NEGATIVE: "Negative",
    Sentiment.TOXIC: "Toxic",
}

TOPIC_NAMES = {
    Topic.SPAM: "Spam",
    Topic.NEWS: "News",
    Topic.ACADEMIC: "Academic",
    Topic.OTHER: "Other",
    Topic.SERVICE: "Service",
    Topic.JOBS_RECRUITMENT: "Jobs & Recruitment",
    Topic.PERSONAL_AFFAIRS: "Personal Affairs",
    Topic.SOCIAL_AFFAIRS: "Social Affairs",
    Topic.HELP_SHARE: "Help & Share",
    Topic.CLUB_EVENTS: "Club & Events",
}

SPLIT_NAMES = ("train", "validation", "test")

TASK_NUM_CLASSES = {"sentiment": len(Sentiment), "topic": len(Topic)}


class CorpusError(Exception):
    """Dataset could not be located or read."""


class SchemaError(CorpusError):
    """A record violates the expected schema; message names the row."""


@dataclass(frozen=True)
class LabeledExample:
    """One comment with its sentiment and topic labels."""

    id: str
    text: str
    sentiment: Sentiment
    topic: Topic


@dataclass
class DatasetSplit:
    name: str
    examples: list[LabeledExample]

    def __len__(self) -> int:
        return len(self.examples)

    def __iter__(self):
        return iter(self.examples)


@dataclass(frozen=True)
class LabelStatsRow:
    label: int
    name: str
    count: int
    percentage: float  # fraction of the whole corpus
    mean_length: float  # mean whitespace-word count


@dataclass
class CorpusStats:
    task: str
    rows: list[LabelStatsRow]

    @property
    def total(self) -> int:
        return sum(r.count for r in self.rows)


@dataclass
class LengthHistogram:
    boundaries: tuple[int, ...]
    bucket_counts: tuple[int, ...]

    def bucket_labels(self) -> list[str]:
        labels = [f"1-{self.boundaries[0]}"]
        for lo, hi in zip(self.boundaries, self.boundaries[1:]):
            labels.append(f"{lo}-{hi}")
        labels.append(f"{self.boundaries[-1]}+")
        return labels


def word_count(text: str) -> int:
    """Whitespace-word count after NFC normalization."""
    return len(unicodedata.normalize("NFC", text).split())


def _decode_label(value, enum_cls, row_ref: str):
    """Accept either an integer code or a display name for a label column."""
    if isinstance(value, bool):
        raise SchemaError(f"{row_ref}: boolean is not a valid {enum_cls.__name__} label")
    if isinstance(value, int):
        try:
            return enum_cls(value)
        except ValueError:
            raise SchemaError(
                f"{row_ref}: unknown {enum_cls.__name__} code {value!r}"
            ) from None
    if isinstance(value, str):
        names = SENTIMENT_NAMES if enum_cls is Sentiment else TOPIC_NAMES
        for code, name in names.items():
            if value.strip().lower() == name.lower():
                return code
        if value.strip().isdigit():
            return _decode_label(int(value), enum_cls, row_ref)
    raise SchemaError(f"{row_ref}: unknown {enum_cls.__name__} label {value!r}")


def _decode_record(record: dict, row_ref: str) -> tuple[LabeledExample, str]:
    for field in ("id", "text", "sentiment", "topic", "split"):
        if field not in record:
            raise SchemaError(f"{row_ref}: missing field {field!r}")
    text = str(record["text"])
    if not text.strip():
        raise SchemaError(f"{row_ref}: empty text")
    split = str(record["split"])
    if split not in SPLIT_NAMES:
        raise SchemaError(f"{row_ref}: unknown split {split!r}")
    example = LabeledExample(
        id=str(record["id"]),
        text=text,
        sentiment=_decode_label(record["sentiment"], Sentiment, row_ref),
        topic=_decode_label(record["topic"], Topic, row_ref),
    )
    return example, split


def load_corpus(source: str | Path) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Load the corpus from a JSONL file (or hub id) into its shipped splits.

    Returns (train, validation, test). Raises CorpusError when the source
    cannot be resolved and SchemaError naming the first offending row.
    """
    path = Path(source)
    if not path.exists():
        if _looks_like_hub_id(str(source)):
            return _load_from_hub(str(source))
        raise CorpusError(f"dataset source not found: {source}")

    by_split: dict[str, list[LabeledExample]] = {name: [] for name in SPLIT_NAMES}
    seen_ids: dict[str, str] = {}
    n_rows = 0
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            row_ref = f"{path.name}:{lineno}"
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise SchemaError(f"{row_ref}: invalid JSON ({exc.msg})") from None
            example, split = _decode_record(record, row_ref)
            if example.id in seen_ids:
                raise SchemaError(
                    f"{row_ref}: duplicate id {example.id!r} "
                    f"(first seen in split {seen_ids[example.id]!r})"
                )
            seen_ids[example.id] = split
            by_split[split].append(example)
            n_rows += 1
    if n_rows == 0:
        raise SchemaError(f"{path}: dataset file contains zero rows")
    return tuple(DatasetSplit(name, by_split[name]) for name in SPLIT_NAMES)


def _looks_like_hub_id(source: str) -> bool:
    return "/" in source and not source.endswith(".jsonl") and not Path(source).suffix


def _load_from_hub(dataset_id: str) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Best-effort loader for a dataset hub identifier (requires `datasets`)."""
    try:
        from datasets import load_dataset
    except ImportError:
        raise CorpusError(
            f"source {dataset_id!r} looks like a hub id but the 'datasets' "
            "package is not installed (pip install neuesc[hub])"
        ) from None
    try:
        raw = load_dataset(dataset_id)
    except Exception as exc:
        raise CorpusError(f"failed to fetch {dataset_id!r} from hub: {exc}") from exc
    splits = []
    alias = {"validation": ("validation", "valid", "val", "dev")}
    for name in SPLIT_NAMES:
        key = next(
            (k for k in alias.get(name, (name,)) if k in raw),
            None,
        )
        if key is None:
            raise SchemaError(f"{dataset_id}: hub dataset has no {name!r} split")
        examples = []
        for i, record in enumerate(raw[key]):
            row_ref = f"{dataset_id}/{key}[{i}]"
            record = dict(record)
            record.setdefault("id", f"{key}-{i}")
            record.setdefault("split", name)
            example, _ = _decode_record(record, row_ref)
            examples.append(example)
        splits.append(DatasetSplit(name, examples))
    return tuple(splits)


def write_corpus(
    splits: Iterable[DatasetSplit], path: str | Path, *, append: bool = False
) -> None:
    """Write splits as line-delimited JSON records with a `split` field."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "a" if append else "w"
    with open(path, mode, encoding="utf-8") as fh:
        for split in splits:
            for ex in split.examples:
                record = {
                    "id": ex.id,
                    "text": ex.text,
                    "sentiment": int(ex.sentiment),
                    "topic": int(ex.topic),
                    "split": split.name,
                }
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def all_examples(
    splits: Sequence[DatasetSplit],
) -> list[LabeledExample]:
    """Concatenate splits in (train, validation, test) order."""
    out: list[LabeledExample] = []
    for split in splits:
        out.extend(split.examples)
    return out


def compute_label_stats(
    examples: Sequence[LabeledExample], task: str
) -> CorpusStats:
    """Per-label count / percentage / mean word length over `examples`.

    Percentages are fractions of the full input and sum to 1 within 1e-6.
    """
    if not examples:
        raise ValueError("cannot compute label statistics of an empty sequence")
    if task == "sentiment":
        enum_cls, names = Sentiment, SENTIMENT_NAMES
        key = lambda ex: ex.sentiment
    elif task == "topic":
        enum_cls, names = Topic, TOPIC_NAMES
        key = lambda ex: ex.topic
    else:
        raise ValueError(f"unknown task {task!r}")

    counts: Counter = Counter()
    length_sums: dict[int, int] = defaultdict(int)
    for ex in examples:
        label = int(key(ex))
        counts[label] += 1
        length_sums[label] += word_count(ex.text)

    total = len(examples)
    rows = []
    for label in enum_cls:
        n = counts.get(int(label), 0)
        rows.append(
            LabelStatsRow(
                label=int(label),
                name=names[label],
                count=n,
                percentage=n / total,
                mean_length=length_sums[int(label)] / n if n else 0.0,
            )
        )
    return CorpusStats(task=task, rows=rows)


def compute_length_histogram(
    examples: Sequence[LabeledExample], boundaries: Sequence[int]
) -> LengthHistogram:
    """Bucket examples by word count.

    Buckets are [1, b0], (b0, b1], ..., (b_last, inf): an example of length
    exactly b_i falls in the bucket ending at b_i.
    """
    bounds = tuple(boundaries)
    if any(b2 <= b1 for b1, b2 in zip(bounds, bounds[1:])) or not bounds:
        raise ValueError(f"boundaries must be strictly ascending, got {bounds}")
    counts = [0] * (len(bounds) + 1)
    for ex in examples:
        n = word_count(ex.text)
        for i, b in enumerate(bounds):
            if n <= b:
                counts[i] += 1
                break
        else:
            counts[-1] += 1
    return LengthHistogram(boundaries=bounds, bucket_counts=tuple(counts))


def _strip_punctuation(token: str) -> str:
    start, end = 0, len(token)
    while start < end and unicodedata.category(token[start]).startswith("P"):
        start += 1
    while end > start and unicodedata.category(token[end - 1]).startswith("P"):
        end -= 1
    return token[start:end]


def vocabulary_tokens(text: str) -> list[str]:
    """Lowercased whitespace tokens with leading/trailing punctuation removed."""
    normalized = unicodedata.normalize("NFC", text).lower()
    tokens = []
    for raw in normalized.split():
        token = _strip_punctuation(raw)
        if token:
            tokens.append(token)
    return tokens


def compute_vocabulary_size(examples: Sequence[LabeledExample]) -> int:
    """Number of distinct tokens under `vocabulary_tokens`."""
    if not examples:
        raise ValueError("cannot compute vocabulary of an empty sequence")
    vocab: set[str] = set()
    for ex in examples:
        vocab.update(vocabulary_tokens(ex.text))
    return len(vocab)


def stratified_split(
    examples: Sequence[LabeledExample],
    ratios: tuple[float, float, float] = (0.7, 0.1, 0.2),
    seed: int = 0,
) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Re-split examples stratified by (sentiment, topic) pair.

    Within every stratum the (train, validation, test) counts match the
    ratios to within one example, allocated by largest remainder with ties
    favoring train, then test, then validation (so a singleton stratum goes
    to train, a pair to train+test). Deterministic for a fixed seed.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise ValueError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must sum to 1.0, got {sum(ratios)}")

    strata: dict[tuple[int, int], list[LabeledExample]] = defaultdict(list)
    for ex in examples:
        strata[(int(ex.sentiment), int(ex.topic))].append(ex)

    rng = np.random.default_rng(seed)
    # Remainder ties resolved in order train, test, validation.
    priority = {0: 0, 2: 1, 1: 2}
    buckets: tuple[list[LabeledExample], ...] = ([], [], [])
    for key in sorted(strata):
        members = strata[key]
        order = rng.permutation(len(members))
        exact = [len(members) * r for r in ratios]
        alloc = [int(np.floor(e)) for e in exact]
        remainder = len(members) - sum(alloc)
        by_frac = sorted(
            range(3), key=lambda i: (-(exact[i] - alloc[i]), priority[i])
        )
        for i in by_frac[:remainder]:
            alloc[i] += 1
        cursor = 0
        for split_idx, n in enumerate(alloc):
            for j in order[cursor : cursor + n]:
                buckets[split_idx].append(members[j])
            cursor += n

    return tuple(
        DatasetSplit(name, bucket) for name, bucket in zip(SPLIT_NAMES, buckets)
    )
