"""
Dataset files and atomic writes.

Datasets are JSONL, one record per line:

    {"id": str, "text_q": str, "text_a": str, "label": float in [0, 1],
     "group": optional str, "split": "train" | "dev" | "test"}

Raw files with scores on another scale (TSV or JSONL) are normalized to
[0, 1] by ``ingest``.
"""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

from loguru import logger

from ..batching.records import SPLITS, PairRecord
from ..common.error_handler import DatasetFormatError

PathLike = Union[str, Path]

TSV_COLUMNS = ("id", "text_q", "text_a", "score", "group", "split")


def atomic_write_bytes(path: PathLike, data: bytes) -> Path:
    """Write to a temporary file in the target directory, then rename over the target."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def atomic_write_text(path: PathLike, text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def _require(obj: Dict[str, Any], key: str, line_number: int, path: str) -> Any:
    if key not in obj:
        raise DatasetFormatError(f"missing field '{key}'", line_number=line_number, path=path)
    return obj[key]


def _record_from_json(obj: Any, line_number: int, path: str) -> PairRecord:
    if not isinstance(obj, dict):
        raise DatasetFormatError("record must be a JSON object", line_number=line_number, path=path)

    record_id = _require(obj, "id", line_number, path)
    text_q = _require(obj, "text_q", line_number, path)
    text_a = _require(obj, "text_a", line_number, path)
    if not isinstance(text_q, str) or not isinstance(text_a, str):
        raise DatasetFormatError("text_q and text_a must be strings", line_number=line_number, path=path)

    try:
        label = float(obj.get("label", 1.0))
    except (TypeError, ValueError):
        raise DatasetFormatError(f"label {obj.get('label')!r} is not a number", line_number=line_number, path=path)
    if not 0.0 <= label <= 1.0:
        raise DatasetFormatError(f"label {label} outside [0, 1]", line_number=line_number, path=path)

    split = obj.get("split", "train")
    if split not in SPLITS:
        raise DatasetFormatError(f"split '{split}' is not one of {SPLITS}", line_number=line_number, path=path)

    group = obj.get("group")
    return PairRecord(
        record_id=str(record_id),
        text_q=text_q,
        text_a=text_a,
        label=label,
        group_key=None if group is None else str(group),
        split=split,
    )


def _json_lines(path: PathLike) -> Iterable[Tuple[int, Any]]:
    source = Path(path)
    with open(source, 'r', encoding='utf-8') as f:
        for line_number, line in enumerate(f, start=1):
            if not line.strip():
                continue
            try:
                yield line_number, json.loads(line)
            except json.JSONDecodeError as e:
                raise DatasetFormatError(f"invalid JSON: {e.msg}", line_number=line_number, path=str(source)) from e


def read_jsonl(path: PathLike) -> List[PairRecord]:
    """
    Read a dataset file.

    Raises:
        DatasetFormatError: with the line number of the first bad line
    """
    source = str(path)
    records: List[PairRecord] = []
    seen: Dict[str, int] = {}
    for line_number, obj in _json_lines(path):
        record = _record_from_json(obj, line_number, source)
        if record.record_id in seen:
            raise DatasetFormatError(
                f"duplicate id '{record.record_id}' (first seen on line {seen[record.record_id]})",
                line_number=line_number, path=source,
            )
        seen[record.record_id] = line_number
        records.append(record)
    logger.debug(f"Read {len(records)} records from {source}")
    return records


def dumps_records(records: Sequence[PairRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)


def write_jsonl(records: Sequence[PairRecord], path: PathLike) -> Path:
    """Write a dataset file atomically."""
    return atomic_write_text(path, dumps_records(records))


def split_records(records: Sequence[PairRecord]) -> Dict[str, List[PairRecord]]:
    """Records of each split, in file order."""
    splits: Dict[str, List[PairRecord]] = {name: [] for name in SPLITS}
    for record in records:
        splits[record.split].append(record)
    return splits


def normalize_score(raw: Any, scale: Tuple[float, float], line_number: Optional[int] = None, path: Optional[str] = None) -> float:
    """
    Map a raw score affinely from [low, high] onto [0, 1].

    Raises:
        DatasetFormatError: if the score is not a number or lies outside the scale
    """
    low, high = scale
    if not high > low:
        raise DatasetFormatError(f"invalid score scale [{low}, {high}]")
    try:
        value = float(raw)
    except (TypeError, ValueError):
        raise DatasetFormatError(f"score {raw!r} is not a number", line_number=line_number, path=path)
    if not low <= value <= high:
        raise DatasetFormatError(f"score {value} outside scale [{low}, {high}]", line_number=line_number, path=path)
    return (value - low) / (high - low)


def _raw_rows(path: PathLike) -> Iterable[Tuple[int, Dict[str, Any]]]:
    source = Path(path)
    if source.suffix.lower() in (".tsv", ".tab"):
        with open(source, 'r', encoding='utf-8', newline='') as f:
            for line_number, line in enumerate(f, start=1):
                line = line.rstrip("\r\n")
                if not line:
                    continue
                fields = line.split("\t")
                if len(fields) < 4 or len(fields) > len(TSV_COLUMNS):
                    raise DatasetFormatError(
                        f"expected 4 to {len(TSV_COLUMNS)} tab-separated fields, got {len(fields)}",
                        line_number=line_number, path=str(source),
                    )
                yield line_number, dict(zip(TSV_COLUMNS, fields))
    else:
        yield from _json_lines(source)


def ingest(raw_path: PathLike, scale: Tuple[float, float]) -> List[PairRecord]:
    """
    Read a raw TSV or JSONL file and normalize its scores to [0, 1].

    TSV columns: id, text_q, text_a, score[, group[, split]]. JSONL rows carry
    the same keys with the raw value under "score". Texts and order are kept
    as they are.

    Args:
        raw_path: Input file (.tsv/.tab for TSV, anything else JSONL)
        scale: (low, high) of the raw score scale

    Returns:
        Records with normalized labels
    """
    source = str(raw_path)
    records: List[PairRecord] = []
    seen = set()
    for line_number, row in _raw_rows(raw_path):
        if not isinstance(row, dict):
            raise DatasetFormatError("record must be a JSON object", line_number=line_number, path=source)
        obj = dict(row)
        obj["label"] = normalize_score(_require(obj, "score", line_number, source), scale, line_number, source)
        if obj.get("group") == "":
            obj["group"] = None
        if not obj.get("split"):
            obj["split"] = "train"
        record = _record_from_json(obj, line_number, source)
        if record.record_id in seen:
            raise DatasetFormatError(f"duplicate id '{record.record_id}'", line_number=line_number, path=source)
        seen.add(record.record_id)
        records.append(record)
    logger.info(f"Ingested {len(records)} records from {source} (scale {scale[0]}..{scale[1]})")
    return records
