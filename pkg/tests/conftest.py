import json
from typing import List

import pytest

from ctxfilter.models import Example, Passage, TaskKind

THREE_EXAMPLES = [
    {
        "id": "museum",
        "query": "When did the museum open?",
        "outputs": ["1997"],
        "task": "extractive_qa",
        "passages": [
            {"rank": 1, "title": "Museum", "text": "The museum is in the old town. It opened in 1997. Tickets are cheap."},
            {"rank": 2, "title": "Cafe", "text": "Visitors come from abroad. The cafe closed in 2001."},
        ],
    },
    {
        "id": "ceiling",
        "query": "Who painted the chapel ceiling?",
        "outputs": ["Michelangelo"],
        "task": "extractive_qa",
        "passages": [
            {"rank": 1, "title": "Chapel", "text": "The chapel stands in Rome. Michelangelo painted the ceiling."},
            {"rank": 2, "title": "Rome", "text": "Rome has many churches. Pilgrims visit every year."},
        ],
    },
    {
        "id": "capital",
        "query": "What is the capital of France?",
        "outputs": ["Paris"],
        "task": "extractive_qa",
        "passages": [
            {"rank": 1, "title": "Lyon", "text": "Lyon is a large city. It lies on the Rhone."},
            {"rank": 2, "title": "France", "text": "Paris is the capital of France."},
        ],
    },
]


def make_example(id: str = "q1", query: str = "query", outputs=("answer",),
                 task: TaskKind = TaskKind.EXTRACTIVE_QA, **extra) -> Example:
    return Example(id=id, query=query, outputs=list(outputs), task_kind=task, **extra)


def make_passages(*texts: str, titles=None) -> List[Passage]:
    titles = titles or [""] * len(texts)
    return [Passage(rank=i, title=title, text=text) for i, (title, text) in enumerate(zip(titles, texts), start=1)]


def write_jsonl(path, rows) -> str:
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for row in rows:
            f.write(json.dumps(row) + "\n")
    return str(path)


@pytest.fixture
def dataset_path(tmp_path):
    return write_jsonl(tmp_path / "three.jsonl", THREE_EXAMPLES)


@pytest.fixture
def empty_dataset_path(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("", encoding="utf-8")
    return str(path)
