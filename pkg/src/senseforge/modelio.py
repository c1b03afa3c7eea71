"""Serialization: binary model files, text export, dataset parsers, task CSVs.

Binary layout (all integers little-endian, counts u64):

    magic   4 bytes  b"GASI"
    version u8       1
    flags   u8       bit 0: 1 = float64 payload, 0 = float32
    pad     2 bytes
    V, K, d u64 each
    has_mask u8
    vocab block: per word, u32 utf-8 byte length + bytes + u64 count
    mask block (if has_mask): V*K bytes, 0/1
    S block: V*K*d floats
    C block: V*d floats
"""

from __future__ import annotations

import csv
import logging
import os
import re
import struct
import tempfile

import numpy as np

from .corpus import Vocabulary
from .evalsuite import (
    ContextualPair,
    IntrusionTask,
    PlainPair,
    SenseSelectionTask,
    WicInstance,
)
from .trainer import ModelParams

log = logging.getLogger(__name__)

MAGIC = b"GASI"
VERSION = 1
FLAG_FLOAT64 = 0x01


class ModelFormatError(ValueError):
    pass


def _atomic_write(path, writer) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-model-")
    try:
        with os.fdopen(fd, "wb") as fh:
            writer(fh)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def save_model(
    params: ModelParams,
    vocab: Vocabulary,
    path,
    mask: np.ndarray | None = None,
    float32: bool = False,
) -> None:
    V, K, d = params.S.shape
    if len(vocab) != V:
        raise ValueError(f"vocabulary size {len(vocab)} != model vocab size {V}")
    if mask is not None and mask.shape != (V, K):
        raise ValueError("mask shape does not match model")
    dtype = "<f4" if float32 else "<f8"

    def write(fh):
        flags = 0 if float32 else FLAG_FLOAT64
        fh.write(MAGIC)
        fh.write(struct.pack("<BBxx", VERSION, flags))
        fh.write(struct.pack("<QQQ", V, K, d))
        fh.write(struct.pack("<B", 0 if mask is None else 1))
        for w, c in zip(vocab.words, vocab.counts):
            b = w.encode("utf-8")
            fh.write(struct.pack("<I", len(b)))
            fh.write(b)
            fh.write(struct.pack("<Q", int(c)))
        if mask is not None:
            fh.write(np.asarray(mask, dtype=np.uint8).tobytes())
        fh.write(np.ascontiguousarray(params.S, dtype=dtype).tobytes())
        fh.write(np.ascontiguousarray(params.C, dtype=dtype).tobytes())

    _atomic_write(path, write)


def _read_exact(fh, n: int, what: str) -> bytes:
    buf = fh.read(n)
    if len(buf) != n:
        raise ModelFormatError(f"truncated file reading {what}: expected {n} bytes, got {len(buf)}")
    return buf


def load_model(path) -> tuple[ModelParams, Vocabulary, np.ndarray | None]:
    with open(path, "rb") as fh:
        if _read_exact(fh, 4, "magic") != MAGIC:
            raise ModelFormatError("bad magic; not a model file")
        version, flags = struct.unpack("<BBxx", _read_exact(fh, 4, "header"))
        if version != VERSION:
            raise ModelFormatError(f"unsupported version {version}")
        V, K, d = struct.unpack("<QQQ", _read_exact(fh, 24, "shape"))
        (has_mask,) = struct.unpack("<B", _read_exact(fh, 1, "mask flag"))
        words, counts = [], []
        for _ in range(V):
            (blen,) = struct.unpack("<I", _read_exact(fh, 4, "word length"))
            words.append(_read_exact(fh, blen, "word").decode("utf-8"))
            (c,) = struct.unpack("<Q", _read_exact(fh, 8, "word count"))
            counts.append(c)
        vocab = Vocabulary(words=words, counts=np.array(counts, dtype=np.int64))
        mask = None
        if has_mask:
            raw = np.frombuffer(_read_exact(fh, V * K, "mask"), dtype=np.uint8)
            mask = raw.reshape(V, K).astype(bool)
        dtype = np.dtype("<f8") if flags & FLAG_FLOAT64 else np.dtype("<f4")
        nbytes = V * K * d * dtype.itemsize
        S = np.frombuffer(_read_exact(fh, nbytes, "sense tensor"), dtype=dtype)
        S = S.reshape(V, K, d).astype(np.float64)
        nbytes = V * d * dtype.itemsize
        C = np.frombuffer(_read_exact(fh, nbytes, "context matrix"), dtype=dtype)
        C = C.reshape(V, d).astype(np.float64)
        trailing = fh.read(1)
        if trailing:
            raise ModelFormatError("trailing bytes after context matrix")
    if not (np.isfinite(S).all() and np.isfinite(C).all()):
        raise ModelFormatError("non-finite entries in model payload")
    return ModelParams(S=S, C=C), vocab, mask


def export_text(params: ModelParams, vocab: Vocabulary, path, mask: np.ndarray | None = None) -> None:
    """word2vec-style text export, one line per active sense: ``word#k v1..vd``."""
    V, K, d = params.S.shape
    active = np.ones((V, K), dtype=bool) if mask is None else np.asarray(mask, dtype=bool)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"{int(active.sum())} {d}\n")
        for w in range(V):
            for k in range(K):
                if active[w, k]:
                    vec = " ".join(f"{x:.6f}" for x in params.S[w, k])
                    fh.write(f"{vocab.words[w]}#{k} {vec}\n")


_TARGET_RE = re.compile(r"<b>\s*(.*?)\s*</b>", re.DOTALL)


def _split_marked_context(text: str) -> tuple[list[str], int]:
    """Tokenize a context with a single <b>target</b> marker."""
    m = _TARGET_RE.search(text)
    if m is None:
        raise ValueError("context has no <b>...</b> target marker")
    before = text[: m.start()].split()
    target_tokens = m.group(1).split()
    if len(target_tokens) != 1:
        raise ValueError(f"target marker wraps {len(target_tokens)} tokens")
    after = text[m.end() :].split()
    return before + target_tokens + after, len(before)


def _parse_lines(path, strict, parse_one):
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            try:
                rec = parse_one(line)
            except (ValueError, IndexError) as exc:
                if strict:
                    raise ValueError(f"{path}:{lineno}: {exc}") from exc
                log.warning("%s:%d: skipping malformed line (%s)", path, lineno, exc)
                continue
            if rec is not None:
                out.append(rec)
    return out


def parse_contextual(path, strict: bool = False) -> list[ContextualPair]:
    """SCWS-convention TSV: id, w1, pos1, w2, pos2, ctx1, ctx2, gold, ratings..."""

    def one(line):
        fields = line.split("\t")
        if len(fields) < 8:
            raise ValueError(f"expected >= 8 tab-separated fields, got {len(fields)}")
        _, w1, pos1, w2, pos2, c1, c2, gold = fields[:8]
        toks1, t1 = _split_marked_context(c1)
        toks2, t2 = _split_marked_context(c2)
        return ContextualPair(
            word1=w1, word2=w2, pos1=pos1, pos2=pos2,
            context1=toks1, context2=toks2, target1=t1, target2=t2,
            gold=float(gold),
        )

    return _parse_lines(path, strict, one)


def parse_plain_pairs(path, strict: bool = False) -> list[PlainPair]:
    """``word1 word2 score`` separated by whitespace/tabs; optional header."""
    pairs = _parse_lines(path, strict, _parse_plain_line)
    return pairs


def _parse_plain_line(line):
    fields = line.split()
    if len(fields) < 3:
        raise ValueError(f"expected 3 fields, got {len(fields)}")
    try:
        gold = float(fields[2])
    except ValueError:
        # header line like "Word1 Word2 Score"
        return None
    return PlainPair(word1=fields[0], word2=fields[1], gold=gold)


def parse_wic(path, gold_path=None, strict: bool = False) -> list[WicInstance]:
    """WiC TSV: target, pos, idx1-idx2, context1, context2; gold from T/F lines."""

    def one(line):
        fields = line.split("\t")
        if len(fields) != 5:
            raise ValueError(f"expected 5 tab-separated fields, got {len(fields)}")
        target, pos, idxs, c1, c2 = fields
        i1, i2 = (int(x) for x in idxs.split("-"))
        toks1, toks2 = c1.split(), c2.split()
        for toks, i in ((toks1, i1), (toks2, i2)):
            if not 0 <= i < len(toks):
                raise ValueError(f"target index {i} outside context of {len(toks)} tokens")
        return WicInstance(target=target, pos=pos, context1=toks1, context2=toks2,
                           target1=i1, target2=i2)

    instances = _parse_lines(path, strict, one)
    if gold_path is not None:
        with open(gold_path, encoding="utf-8") as fh:
            labels = [ln.strip() for ln in fh if ln.strip()]
        if len(labels) != len(instances):
            raise ValueError(f"{len(labels)} gold labels for {len(instances)} instances")
        for inst, lab in zip(instances, labels):
            if lab not in ("T", "F"):
                raise ValueError(f"bad gold label {lab!r}")
            inst.gold = lab == "T"
    return instances


def write_intrusion_csv(tasks: list[IntrusionTask], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["task_id", "word", "sense", "option_1", "option_2", "option_3",
                    "option_4", "intruder_index"])
        for i, t in enumerate(tasks):
            w.writerow([i, t.word, t.sense, *t.shown_words, t.intruder_index])


def write_sense_selection_csv(tasks: list[SenseSelectionTask], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        n_groups = max((len(t.sense_groups) for t in tasks), default=0)
        header = ["task_id", "word"]
        header += [f"group_{i}" for i in range(n_groups)]
        header += ["model_choice"]
        header += [f"posterior_{i}" for i in range(n_groups)]
        w.writerow(header)
        for i, t in enumerate(tasks):
            groups = [" ".join(g) for g in t.sense_groups]
            groups += [""] * (n_groups - len(groups))
            post = [f"{p:.6f}" for p in t.posterior]
            post += [""] * (n_groups - len(post))
            w.writerow([i, t.word, *groups, t.model_choice, *post])
