"""Spider-format converter: question + schema in, engine instance JSON out.

The serialization follows the usual flat layout for text-to-SQL parsers:
``question words | db_name | table : col1 , col2 | table2 : ...``. Each
question word, the database name, each table name, and each column name
becomes one feature group; separator tokens belong to no feature.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path


class ConversionError(ValueError):
    pass


@dataclass
class SpiderExample:
    question: str
    db_id: str
    schema: dict[str, list[str]]  # table -> column names, insertion ordered
    gold_sql: str | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.question.strip():
            raise ConversionError("question is empty")
        if not self.schema:
            raise ConversionError(f"database {self.db_id!r} has no tables")


def load_schemas(tables_path) -> dict[str, dict[str, list[str]]]:
    """Parse a Spider tables.json into db_id -> {table -> [columns]}."""
    schemas: dict[str, dict[str, list[str]]] = {}
    for entry in json.loads(Path(tables_path).read_text(encoding="utf-8")):
        tables = entry["table_names_original"]
        schema: dict[str, list[str]] = {t: [] for t in tables}
        for table_idx, column in entry["column_names_original"]:
            if table_idx >= 0:  # skip the '*' pseudo-column
                schema[tables[table_idx]].append(column)
        schemas[entry["db_id"]] = schema
    return schemas


def load_examples(examples_path, schemas) -> list[SpiderExample]:
    out = []
    for entry in json.loads(Path(examples_path).read_text(encoding="utf-8")):
        db_id = entry["db_id"]
        if db_id not in schemas:
            raise ConversionError(f"no schema for database {db_id!r}")
        out.append(
            SpiderExample(
                question=entry["question"],
                db_id=db_id,
                schema=schemas[db_id],
                gold_sql=entry.get("query"),
            )
        )
    return out


def serialize_instance(example: SpiderExample) -> dict:
    """Build the instance dict: flat token sequence plus feature spans."""
    tokens: list[str] = []
    features: list[dict] = []

    def add_feature(name: str, words: list[str]) -> None:
        start = len(tokens)
        tokens.extend(words)
        features.append({"name": name, "spans": [[start, len(tokens)]]})

    for word in example.question.split():
        add_feature(word, [word])
    tokens.append("|")
    add_feature(example.db_id, [example.db_id])
    for table, columns in example.schema.items():
        tokens.append("|")
        add_feature(f"table:{table}", [table])
        tokens.append(":")
        for col_idx, column in enumerate(columns):
            if col_idx > 0:
                tokens.append(",")
            add_feature(f"{table}.{column}", [column])

    metadata = {"database": example.db_id}
    if example.gold_sql:
        metadata["gold_sql"] = example.gold_sql
    output_tokens = example.gold_sql.split() if example.gold_sql else ["select"]
    return {
        "input_tokens": tokens,
        "features": features,
        "output_tokens": output_tokens,
        "metadata": metadata,
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description="Spider files in, instance JSON-lines out")
    parser.add_argument("--examples", required=True, help="Spider examples JSON (dev/train)")
    parser.add_argument("--tables", required=True, help="Spider tables.json")
    parser.add_argument("--out", required=True, help="output instance JSON-lines path")
    parser.add_argument("--limit", type=int, help="convert at most this many examples")
    args = parser.parse_args(argv)

    try:
        schemas = load_schemas(args.tables)
        examples = load_examples(args.examples, schemas)
    except (ConversionError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    if args.limit:
        examples = examples[: args.limit]

    with open(args.out, "w", encoding="utf-8") as fh:
        for i, example in enumerate(examples):
            instance = serialize_instance(example)
            instance["metadata"]["id"] = f"{example.db_id}-{i}"
            fh.write(json.dumps(instance) + "\n")
    print(f"wrote {args.out} ({len(examples)} instances)")
    return 0


if __name__ == "__main__":
    sys.exit(main())
