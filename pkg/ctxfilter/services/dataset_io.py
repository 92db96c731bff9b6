"""
JSONL reading and writing for datasets, silver records and prediction files.

Input dataset line:
{"id": str, "query": str, "outputs": [str], "task": str,
 "passages": [{"rank": int, "title": str, "text": str, "score": float?}]}
Unknown fields are kept and written back out.
"""

import json
import logging
from typing import IO, Dict, Iterable, Iterator, List, Tuple, Type, TypeVar

from pydantic import BaseModel, ValidationError

from ctxfilter.errors import DataError
from ctxfilter.models import Example, Passage, SilverRecord

logger = logging.getLogger(__name__)

DatasetItem = Tuple[Example, List[Passage]]
M = TypeVar("M", bound=BaseModel)


def _json_lines(stream: IO[str]) -> Iterator[Tuple[int, dict]]:
    for line_no, line in enumerate(stream, start=1):
        if not line.strip():
            continue
        try:
            data = json.loads(line)
        except json.JSONDecodeError as e:
            raise DataError(f"malformed JSON: {e.msg}", line_no) from e
        if not isinstance(data, dict):
            raise DataError("record must be a JSON object", line_no)
        yield line_no, data


def _validation_message(error: ValidationError) -> str:
    first = error.errors()[0]
    where = ".".join(str(p) for p in first.get("loc", ()))
    return f"{where}: {first.get('msg')}" if where else str(first.get("msg"))


def parse_example(data: dict, line_no: int) -> DatasetItem:
    data = dict(data)
    raw_passages = data.pop("passages", [])
    if not isinstance(raw_passages, list):
        raise DataError("'passages' must be a list", line_no)
    try:
        example = Example.model_validate(data)
        passages = [Passage.model_validate(p) for p in raw_passages]
    except ValidationError as e:
        raise DataError(_validation_message(e), line_no) from e

    ranks = [p.rank for p in passages]
    if len(set(ranks)) != len(ranks):
        raise DataError(f"duplicate passage rank in example {example.id!r}: {sorted(ranks)}", line_no)
    if sorted(ranks) != list(range(1, len(ranks) + 1)):
        raise DataError(f"passage ranks must be contiguous from 1 in example {example.id!r}: {sorted(ranks)}", line_no)
    return example, passages


def iter_examples(stream: IO[str]) -> Iterator[DatasetItem]:
    """Streams (Example, passages) pairs in file order."""
    for line_no, data in _json_lines(stream):
        yield parse_example(data, line_no)


def read_examples(stream: IO[str]) -> List[DatasetItem]:
    return list(iter_examples(stream))


def example_to_record(example: Example, passages: List[Passage]) -> dict:
    data = example.to_record()
    data["passages"] = [p.to_record() for p in passages]
    return data


def dump_line(data: dict) -> str:
    return json.dumps(data, ensure_ascii=False)


def write_examples(items: Iterable[DatasetItem], sink: IO[str]) -> None:
    for example, passages in items:
        sink.write(dump_line(example_to_record(example, passages)) + "\n")


def write_records(records: Iterable[BaseModel], sink: IO[str]) -> None:
    """One JSON object per line, in input order."""
    for record in records:
        sink.write(dump_line(record.model_dump(mode="json")) + "\n")


def iter_models(stream: IO[str], model: Type[M]) -> Iterator[M]:
    for line_no, data in _json_lines(stream):
        try:
            yield model.model_validate(data)
        except ValidationError as e:
            raise DataError(_validation_message(e), line_no) from e


def read_records(stream: IO[str]) -> List[SilverRecord]:
    return list(iter_models(stream, SilverRecord))


def read_id_map(stream: IO[str], field: str) -> Dict[str, str]:
    """Reads {"id": str, <field>: str} lines (predictions or predicted contexts)."""
    mapping: Dict[str, str] = {}
    for line_no, data in _json_lines(stream):
        if not isinstance(data.get("id"), str) or not isinstance(data.get(field), str):
            raise DataError(f"expected string fields 'id' and '{field}'", line_no)
        if data["id"] in mapping:
            raise DataError(f"duplicate id {data['id']!r}", line_no)
        mapping[data["id"]] = data[field]
    logger.debug(f"[DatasetIO] Read {len(mapping)} '{field}' entries")
    return mapping
