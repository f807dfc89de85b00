#!/usr/bin/env python3
"""Convert the public InfoTabS release to canonical tables and pairs files.

Expected release layout (paths configurable):
  <release>/tables/json/<table_id>.json     {"title": [str], "<key>": [str, ...], ...}
  <release>/tables/table_categories.tsv     columns include table_id and category
  <release>/maindata/infotabs_<split>.tsv   columns include table_id, hypothesis, label

Writes <out>/<name>.jsonl (tables referenced by the split, first-seen order)
and <out>/<name>.pairs.jsonl for each split.
"""

import argparse
import csv
import json
import sys
from pathlib import Path

SPLITS = {
    "train": "infotabs_train.tsv",
    "dev": "infotabs_dev.tsv",
    "alpha1": "infotabs_test_alpha1.tsv",
    "alpha2": "infotabs_test_alpha2.tsv",
    "alpha3": "infotabs_test_alpha3.tsv",
}


def read_tsv(path):
    with open(path, encoding="utf-8", newline="") as f:
        return list(csv.DictReader(f, delimiter="\t", quoting=csv.QUOTE_NONE))


def load_categories(path):
    return {row["table_id"].strip(): row["category"].strip() for row in read_tsv(path)}


def load_table(json_dir, table_id, category):
    with open(json_dir / f"{table_id}.json", encoding="utf-8") as f:
        raw = json.load(f)
    title = raw.pop("title", [table_id])
    title = title[0] if isinstance(title, list) and title else str(title)
    rows = []
    for key, values in raw.items():
        if not isinstance(values, list):
            values = [values]
        rows.append({"key": key, "values": [str(v) for v in values]})
    return {"id": table_id, "title": title, "category": category, "rows": rows}


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as f:
        for r in records:
            f.write(json.dumps(r, ensure_ascii=False) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--release", required=True, type=Path, help="InfoTabS data directory")
    ap.add_argument("--out", required=True, type=Path)
    ap.add_argument("--tables-json", type=Path, help="default: <release>/tables/json")
    ap.add_argument("--categories", type=Path, help="default: <release>/tables/table_categories.tsv")
    ap.add_argument("--maindata", type=Path, help="default: <release>/maindata")
    args = ap.parse_args()

    json_dir = args.tables_json or args.release / "tables" / "json"
    categories = load_categories(args.categories or args.release / "tables" / "table_categories.tsv")
    maindata = args.maindata or args.release / "maindata"
    args.out.mkdir(parents=True, exist_ok=True)

    for name, filename in SPLITS.items():
        rows = read_tsv(maindata / filename)
        tables, pairs = {}, []
        for i, row in enumerate(rows):
            table_id = row["table_id"].strip()
            if table_id not in tables:
                if table_id not in categories:
                    sys.exit(f"{filename}: no category for table {table_id}")
                tables[table_id] = load_table(json_dir, table_id, categories[table_id])
            pair = {"pair_id": f"{name}-{i}", "table_id": table_id, "hypothesis": row["hypothesis"]}
            label = (row.get("label") or "").strip()
            if label in ("E", "C", "N"):
                pair["label"] = label
            pairs.append(pair)
        write_jsonl(args.out / f"{name}.jsonl", tables.values())
        write_jsonl(args.out / f"{name}.pairs.jsonl", pairs)
        print(f"{name}: {len(tables)} tables, {len(pairs)} pairs")


if __name__ == "__main__":
    main()
