"""Deterministic statistical replica of the NEU-ESC corpus.

The published dataset lives on a public hub that is not reachable from every
environment, so this module synthesizes a stand-in corpus whose marginal
statistics match the published ones: label counts, per-label mean lengths,
split sizes, word-length buckets, and vocabulary size. Texts are synthetic
Vietnamese-looking token streams with class-dependent token distributions
(sentiment marker words, per-topic vocabularies), so classifiers trained on
the replica have genuine signal to learn.

Note: the published sentiment table lists 5,250 negative samples, but the
four counts must sum to the 32,966-sample corpus and the published share
(15.77%) pins the negative class at 5,200; the replica uses the consistent
value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .corpus import DatasetSplit, LabeledExample, Sentiment, Topic

TOTAL_SAMPLES = 32_966
SPLIT_SIZES = {"train": 23_048, "validation": 3_305, "test": 6_613}

SENTIMENT_COUNTS = (22_773, 4_148, 5_200, 845)
SENTIMENT_MEAN_LENGTHS = (23.21, 24.29, 34.30, 22.78)

TOPIC_COUNTS = (405, 902, 10_512, 14_402, 2_358, 808, 1_478, 769, 670, 662)
TOPIC_MEAN_LENGTHS = (22.71, 59.55, 29.62, 11.40, 30.94, 55.14, 33.17, 67.11, 37.03, 68.82)

LENGTH_BUCKET_BOUNDS = (10, 20, 50)
LENGTH_BUCKET_COUNTS = (13_638, 9_934, 6_169, 3_225)

VOCABULARY_SIZE = 12_759

_MAX_WORDS = 400
_BUCKET_LO = (1, 11, 21, 51)
_BUCKET_HI = (10, 20, 50, _MAX_WORDS)

_SENTIMENT_MARKERS = {
    0: ("bình", "thường", "vậy", "nhé", "thôi", "ừm", "nha", "đó"),
    1: ("tốt", "thích", "tuyệt", "đỉnh", "ngon", "vui", "yêu", "xịn"),
    2: ("tệ", "kém", "chán", "buồn", "dở", "thất", "vọng", "mệt"),
    3: ("cút", "ngu", "vãi", "rác", "óc", "đần", "xàm", "nhảm"),
}

_COMMON_WORDS = (
    "là của và có không cho này đi em anh mình học trường lớp thi điểm môn "
    "được rồi nhiều người cũng các với như thì mà ai gì sao năm kỳ bài giờ "
    "ngày nào đang sẽ nên phải biết làm xem hỏi nói từ đến trong ra vào còn "
    "chỉ để khi về trên dưới sau trước cả rất quá hơn ít đã mới luôn chưa"
).split()

_ONSETS = (
    "b c ch d đ g gh h k kh l m n ng nh p ph qu r s t th tr v x".split()
)
_RHYMES = (
    "a an ang anh ao au ay e em en eo ê ên i im in iên o on ong ôi ơn "
    "u ung uôn ư ương y oa oan".split()
)


@dataclass(frozen=True)
class ReplicaProfile:
    """Target marginals the generated corpus must reproduce."""

    total: int = TOTAL_SAMPLES
    sentiment_counts: tuple[int, ...] = SENTIMENT_COUNTS
    topic_counts: tuple[int, ...] = TOPIC_COUNTS
    sentiment_means: tuple[float, ...] = SENTIMENT_MEAN_LENGTHS
    topic_means: tuple[float, ...] = TOPIC_MEAN_LENGTHS
    bucket_counts: tuple[int, ...] = LENGTH_BUCKET_COUNTS
    vocabulary_size: int = VOCABULARY_SIZE


def _round_matrix_to_marginals(
    fractional: np.ndarray, row_targets: np.ndarray, col_targets: np.ndarray
) -> np.ndarray:
    """Round a nonnegative matrix to integers with exact row and column sums.

    Rows are rounded by largest remainder (exact row sums), then single-unit
    moves within rows repair the column sums. Deterministic.
    """
    assert fractional.shape == (len(row_targets), len(col_targets))
    assert int(row_targets.sum()) == int(col_targets.sum())
    n_rows, n_cols = fractional.shape
    out = np.zeros_like(fractional, dtype=np.int64)
    for r in range(n_rows):
        row = fractional[r]
        scale = row_targets[r] / row.sum() if row.sum() > 0 else 0.0
        scaled = row * scale
        base = np.floor(scaled).astype(np.int64)
        short = int(row_targets[r] - base.sum())
        order = np.argsort(-(scaled - base), kind="stable")
        base[order[:short]] += 1
        out[r] = base

    col_err = out.sum(axis=0) - col_targets
    while col_err.any():
        src = int(np.argmax(col_err))
        dst = int(np.argmin(col_err))
        movable = np.where(out[:, src] > 0)[0]
        # Prefer the row where the source cell is most over its fractional
        # share, to keep the result close to the target distribution.
        scores = out[movable, src] - fractional[movable, src]
        r = int(movable[np.argmax(scores)])
        out[r, src] -= 1
        out[r, dst] += 1
        col_err[src] -= 1
        col_err[dst] += 1
    return out


def _joint_label_counts(profile: ReplicaProfile) -> np.ndarray:
    s = np.asarray(profile.sentiment_counts, dtype=np.float64)
    t = np.asarray(profile.topic_counts, dtype=np.float64)
    independent = np.outer(s, t) / profile.total
    return _round_matrix_to_marginals(
        independent,
        np.asarray(profile.sentiment_counts, dtype=np.int64),
        np.asarray(profile.topic_counts, dtype=np.int64),
    )


def _cell_mean_lengths(joint: np.ndarray, profile: ReplicaProfile) -> np.ndarray:
    """Per-(sentiment, topic) target mean lengths honoring both marginals."""
    s_means = np.asarray(profile.sentiment_means)
    t_means = np.asarray(profile.topic_means)
    s_counts = joint.sum(axis=1)
    t_counts = joint.sum(axis=0)
    global_mean = float((s_counts * s_means).sum() / s_counts.sum())
    mu = t_means[None, :] + (s_means[:, None] - global_mean)
    for _ in range(25):
        row_mean = (joint * mu).sum(axis=1) / s_counts
        mu += (s_means - row_mean)[:, None]
        col_mean = (joint * mu).sum(axis=0) / t_counts
        mu += (t_means - col_mean)[None, :]
    return np.maximum(mu, 1.5)


def _lognormal_bucket_prior(mu: np.ndarray, sigma: float = 0.85) -> np.ndarray:
    """P(length bucket) per cell for a lognormal with mean mu[cell]."""
    from scipy.stats import norm  # local import keeps scipy optional elsewhere

    log_median = np.log(mu) - sigma**2 / 2.0
    edges = np.asarray([b + 0.5 for b in LENGTH_BUCKET_BOUNDS])
    z = (np.log(edges)[None, None, :] - log_median[:, :, None]) / sigma
    cdf = norm.cdf(z)
    probs = np.concatenate(
        [cdf[..., :1], np.diff(cdf, axis=-1), 1.0 - cdf[..., -1:]], axis=-1
    )
    return np.clip(probs, 1e-9, None)


def _bucket_allocation(
    joint: np.ndarray, mu: np.ndarray, profile: ReplicaProfile
) -> np.ndarray:
    """Integer counts k[cell, bucket] with exact cell and bucket sums."""
    prior = _lognormal_bucket_prior(mu)
    cells = joint.reshape(-1).astype(np.float64)
    expected = prior.reshape(len(cells), -1) * cells[:, None]
    bucket_targets = np.asarray(profile.bucket_counts, dtype=np.float64)
    # Iterative proportional fitting toward both marginals.
    f = expected.copy()
    for _ in range(200):
        row_sums = f.sum(axis=1, keepdims=True)
        f *= np.where(row_sums > 0, cells[:, None] / np.maximum(row_sums, 1e-12), 0.0)
        col_sums = f.sum(axis=0, keepdims=True)
        f *= bucket_targets[None, :] / np.maximum(col_sums, 1e-12)
    k = _round_matrix_to_marginals(
        f, cells.astype(np.int64), bucket_targets.astype(np.int64)
    )
    return k


def _repair_sum_feasibility(k: np.ndarray, cell_sums: np.ndarray) -> np.ndarray:
    """Exchange bucket units between cells until every cell can realize its
    target word sum with lengths inside its buckets' ranges. Preserves all
    marginals."""
    lo = np.asarray(_BUCKET_LO)
    hi = np.asarray(_BUCKET_HI)
    k = k.copy()
    for _ in range(10_000):
        mins = (k * lo).sum(axis=1)
        maxs = (k * hi).sum(axis=1)
        too_low = np.where(cell_sums > maxs)[0]  # needs longer buckets
        too_high = np.where(cell_sums < mins)[0]  # needs shorter buckets
        if len(too_low) == 0 and len(too_high) == 0:
            return k
        if len(too_low) > 0:
            a = int(too_low[0])
            upgrade = True
        else:
            a = int(too_high[0])
            upgrade = False
        done = False
        buckets = range(len(lo) - 1)
        for b in (buckets if upgrade else reversed(list(buckets))):
            src, dst = (b, b + 1) if upgrade else (b + 1, b)
            if k[a, src] == 0:
                continue
            slack = (k * hi).sum(axis=1) - cell_sums if upgrade else cell_sums - (k * lo).sum(axis=1)
            need = hi[dst] - hi[src] if upgrade else lo[src] - lo[dst]
            partners = np.where((k[:, dst] > 0) & (slack >= need) & (np.arange(len(k)) != a))[0]
            if len(partners) == 0:
                continue
            p = int(partners[np.argmax(slack[partners])])
            k[a, src] -= 1
            k[a, dst] += 1
            k[p, dst] -= 1
            k[p, src] += 1
            done = True
            break
        if not done:
            raise RuntimeError("bucket allocation cannot satisfy cell word sums")
    raise RuntimeError("bucket feasibility repair did not converge")


def _lengths_for_cell(
    k_row: np.ndarray, target_sum: int, rng: np.random.Generator
) -> list[np.ndarray]:
    """Integer lengths per bucket for one cell, summing exactly to target."""
    lo = np.asarray(_BUCKET_LO)
    hi = np.asarray(_BUCKET_HI)
    mins = k_row * lo
    maxs = k_row * hi
    assert mins.sum() <= target_sum <= maxs.sum()
    # Water-fill bucket word sums proportionally to their ranges.
    sums = mins.astype(np.int64).copy()
    remaining = target_sum - int(sums.sum())
    room = (maxs - mins).astype(np.float64)
    if room.sum() > 0:
        add = np.floor(room * (remaining / room.sum())).astype(np.int64)
        add = np.minimum(add, (maxs - sums).astype(np.int64))
        sums += add
        remaining = target_sum - int(sums.sum())
    for b in np.argsort(-(maxs - sums)):
        if remaining == 0:
            break
        take = min(remaining, int(maxs[b] - sums[b]))
        sums[b] += take
        remaining -= take
    assert remaining == 0

    out = []
    for b in range(len(k_row)):
        n = int(k_row[b])
        if n == 0:
            out.append(np.zeros(0, dtype=np.int64))
            continue
        total = int(sums[b])
        base, rem = divmod(total, n)
        lengths = np.full(n, base, dtype=np.int64)
        lengths[:rem] += 1
        # Jitter in compensating pairs so lengths vary but the sum and the
        # bucket membership are unchanged.
        for _ in range(2 * n):
            i, j = rng.integers(0, n, size=2)
            d = int(
                min(hi[b] - lengths[i], lengths[j] - lo[b], int(rng.integers(1, 4)))
            )
            if d > 0 and i != j:
                lengths[i] += d
                lengths[j] -= d
        out.append(lengths)
    return out


def _build_vocabulary(rng: np.random.Generator) -> tuple[list[str], dict[int, list[str]]]:
    """Return (shared pool, per-topic pools); all words distinct, total 12,759."""
    used: set[str] = set()
    for words in _SENTIMENT_MARKERS.values():
        used.update(words)

    shared: list[str] = []
    for w in _COMMON_WORDS:
        if w not in used:
            shared.append(w)
            used.add(w)

    syllables = [o + r for o in _ONSETS for r in _RHYMES]
    combos = []
    for a in syllables:
        for b in syllables:
            combos.append(a + b)
    rng.shuffle(combos)

    n_markers = sum(len(v) for v in _SENTIMENT_MARKERS.values())
    per_topic = (VOCABULARY_SIZE - n_markers - len(shared)) // len(Topic)
    leftover = VOCABULARY_SIZE - n_markers - len(shared) - per_topic * len(Topic)

    it = iter(combos)

    def take(n: int) -> list[str]:
        out = []
        while len(out) < n:
            w = next(it)
            if w not in used:
                used.add(w)
                out.append(w)
        return out

    shared.extend(take(leftover))
    topic_pools = {int(t): take(per_topic) for t in Topic}
    total = n_markers + len(shared) + sum(len(p) for p in topic_pools.values())
    assert total == VOCABULARY_SIZE
    return shared, topic_pools


def _zipf_probs(n: int, exponent: float = 1.08) -> np.ndarray:
    p = 1.0 / np.arange(2, n + 2, dtype=np.float64) ** exponent
    return p / p.sum()


def build_reference_corpus(
    seed: int = 0, profile: ReplicaProfile | None = None
) -> tuple[DatasetSplit, DatasetSplit, DatasetSplit]:
    """Generate the replica corpus; deterministic for a fixed seed."""
    profile = profile or ReplicaProfile()
    rng = np.random.default_rng(seed)

    joint = _joint_label_counts(profile)
    mu = _cell_mean_lengths(joint, profile)
    cell_sums = np.rint(joint.reshape(-1) * mu.reshape(-1)).astype(np.int64)
    cell_sums = np.maximum(cell_sums, joint.reshape(-1))  # every text >= 1 word
    k = _bucket_allocation(joint, mu, profile)
    k = _repair_sum_feasibility(k, cell_sums)

    n_s, n_t = joint.shape
    records: list[tuple[int, int, int]] = []  # (sentiment, topic, length)
    for s in range(n_s):
        for t in range(n_t):
            cell = s * n_t + t
            if joint[s, t] == 0:
                continue
            per_bucket = _lengths_for_cell(k[cell], int(cell_sums[cell]), rng)
            for lengths in per_bucket:
                records.extend((s, t, int(L)) for L in lengths)

    shared, topic_pools = _build_vocabulary(rng)
    shared_arr = np.asarray(shared, dtype=object)
    shared_probs = _zipf_probs(len(shared))
    topic_arrs = {t: np.asarray(p, dtype=object) for t, p in topic_pools.items()}
    topic_probs = {t: _zipf_probs(len(p)) for t, p in topic_pools.items()}

    order = rng.permutation(len(records))
    records = [records[i] for i in order]

    texts: list[list[str]] = []
    usage: dict[str, int] = {}
    for s, t, length in records:
        n_marker = max(1, round(0.10 * length))
        n_topic = round(0.45 * max(length - n_marker, 0))
        n_shared = length - n_marker - n_topic
        markers = _SENTIMENT_MARKERS[s]
        tokens = list(rng.choice(len(markers), size=n_marker))
        words = [markers[i] for i in tokens]
        if n_topic:
            words.extend(
                rng.choice(topic_arrs[t], size=n_topic, p=topic_probs[t]).tolist()
            )
        if n_shared:
            words.extend(
                rng.choice(shared_arr, size=n_shared, p=shared_probs).tolist()
            )
        perm = rng.permutation(length)
        words = [words[i] for i in perm]
        texts.append(words)
        for w in words:
            usage[w] = usage.get(w, 0) + 1

    _inject_unused_words(texts, usage, shared, topic_pools, rng)

    split_assign = _assign_splits(records, rng)
    examples = {name: [] for name in SPLIT_SIZES}
    for i, ((s, t, _), words, split) in enumerate(zip(records, texts, split_assign)):
        examples[split].append(
            LabeledExample(
                id=f"neu-{i:05d}",
                text=" ".join(words),
                sentiment=Sentiment(s),
                topic=Topic(t),
            )
        )

    splits = tuple(DatasetSplit(name, examples[name]) for name in ("train", "validation", "test"))
    _verify(splits, profile)
    return splits


def _inject_unused_words(
    texts: list[list[str]],
    usage: dict[str, int],
    shared: list[str],
    topic_pools: dict[int, list[str]],
    rng: np.random.Generator,
) -> None:
    """Replace duplicate tokens with never-drawn pool words so the corpus
    vocabulary is exactly the pool."""
    marker_words = {w for ws in _SENTIMENT_MARKERS.values() for w in ws}
    all_words = set(shared) | marker_words
    for pool in topic_pools.values():
        all_words.update(pool)
    unused = sorted(all_words - set(usage))
    if not unused:
        return
    flat = [(i, j) for i, words in enumerate(texts) for j in range(len(words))]
    order = rng.permutation(len(flat))
    cursor = 0
    for pos in order:
        if cursor >= len(unused):
            break
        i, j = flat[pos]
        w = texts[i][j]
        if w in marker_words or usage.get(w, 0) < 2:
            continue
        replacement = unused[cursor]
        cursor += 1
        usage[w] -= 1
        usage[replacement] = 1
        texts[i][j] = replacement
    if cursor < len(unused):
        raise RuntimeError(
            f"could not place {len(unused) - cursor} unused vocabulary words"
        )


def _assign_splits(
    records: list[tuple[int, int, int]], rng: np.random.Generator
) -> list[str]:
    """Stratified split assignment with exact global split sizes."""
    cells: dict[tuple[int, int], list[int]] = {}
    for i, (s, t, _) in enumerate(records):
        cells.setdefault((s, t), []).append(i)
    keys = sorted(cells)
    cell_sizes = np.asarray([len(cells[key]) for key in keys], dtype=np.float64)
    split_targets = np.asarray(
        [SPLIT_SIZES[name] for name in ("train", "validation", "test")],
        dtype=np.int64,
    )
    ratios = split_targets / split_targets.sum()
    fractional = cell_sizes[:, None] * ratios[None, :]
    alloc = _round_matrix_to_marginals(
        fractional, cell_sizes.astype(np.int64), split_targets
    )
    assign = [""] * len(records)
    for row, key in enumerate(keys):
        members = cells[key]
        order = rng.permutation(len(members))
        cursor = 0
        for name, n in zip(("train", "validation", "test"), alloc[row]):
            for idx in order[cursor : cursor + int(n)]:
                assign[members[idx]] = name
            cursor += int(n)
    return assign


def _verify(splits, profile: ReplicaProfile) -> None:
    from . import corpus

    sizes = {s.name: len(s) for s in splits}
    assert sizes == SPLIT_SIZES, sizes
    examples = corpus.all_examples(splits)
    assert len(examples) == profile.total

    sent = corpus.compute_label_stats(examples, "sentiment")
    assert tuple(r.count for r in sent.rows) == profile.sentiment_counts
    topic = corpus.compute_label_stats(examples, "topic")
    assert tuple(r.count for r in topic.rows) == profile.topic_counts
    for row, target in zip(sent.rows, profile.sentiment_means):
        assert abs(row.mean_length - target) < 0.25, (row, target)
    for row, target in zip(topic.rows, profile.topic_means):
        assert abs(row.mean_length - target) < 0.25, (row, target)

    hist = corpus.compute_length_histogram(examples, LENGTH_BUCKET_BOUNDS)
    assert hist.bucket_counts == profile.bucket_counts, hist.bucket_counts
    vocab = corpus.compute_vocabulary_size(examples)
    assert vocab == profile.vocabulary_size, vocab
