"""Loaders that turn the public COMPAS and UCI Adult files into clean tables."""
from __future__ import annotations

import csv
import json
import os

import numpy as np

from .data import CATEGORICAL, NUMERIC, RawTable, load_raw
from .errors import DataError

COMPAS_SCHEMA = {
    "label": "two_year_recid",
    "columns": {
        "age": NUMERIC,
        "priors_count": NUMERIC,
        "juv_fel_count": NUMERIC,
        "juv_misd_count": NUMERIC,
        "juv_other_count": NUMERIC,
        "sex": CATEGORICAL,
        "race": CATEGORICAL,
        "c_charge_degree": CATEGORICAL,
    },
}

ADULT_COLUMNS = ["age", "workclass", "fnlwgt", "education", "education_num", "marital_status",
                 "occupation", "relationship", "race", "sex", "capital_gain", "capital_loss",
                 "hours_per_week", "native_country", "income"]

ADULT_SCHEMA = {
    "label": "income",
    "columns": {
        "age": NUMERIC,
        "education_num": NUMERIC,
        "capital_gain": NUMERIC,
        "capital_loss": NUMERIC,
        "hours_per_week": NUMERIC,
        "workclass": CATEGORICAL,
        "marital_status": CATEGORICAL,
        "occupation": CATEGORICAL,
        "relationship": CATEGORICAL,
        "race": CATEGORICAL,
        "sex": CATEGORICAL,
    },
}


def _compas_keep(row: dict) -> bool:
    # the standard two-year recidivism screening filter
    try:
        days = int(row["days_b_screening_arrest"])
    except ValueError:
        return False
    return (-30 <= days <= 30 and row["is_recid"] != "-1" and row["c_charge_degree"] != "O"
            and row["score_text"] != "N/A")


def compas_rows(path) -> list[dict]:
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        # the file repeats a few column names; keep the first occurrence
        first = {}
        for i, name in enumerate(header):
            first.setdefault(name, i)
        rows = [{k: r[i] for k, i in first.items()} for r in reader]
    return [r for r in rows if _compas_keep(r)]


def adult_rows(path) -> list[dict]:
    if not os.path.exists(path):
        raise DataError(f"missing file: {path}")
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.reader(fh, skipinitialspace=True):
            if len(r) != len(ADULT_COLUMNS):
                continue
            row = dict(zip(ADULT_COLUMNS, r))
            row["income"] = "1" if row["income"].rstrip(".") == ">50K" else "0"
            out.append(row)
    return out


def write_table(rows: list[dict], schema: dict, csv_path, schema_path=None) -> None:
    cols = [*schema["columns"], schema["label"]]
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(cols)
        for r in rows:
            w.writerow([r[c] for c in cols])
    if schema_path is not None:
        with open(schema_path, "w") as fh:
            json.dump(schema, fh, indent=1)


def prepare(name: str, src, out_dir) -> tuple[str, str]:
    """Write ``<name>.csv`` and ``<name>.schema.json`` into ``out_dir``."""
    if name == "compas":
        rows, schema = compas_rows(src), COMPAS_SCHEMA
    elif name == "adult":
        rows, schema = adult_rows(src), ADULT_SCHEMA
    else:
        raise DataError(f"unknown dataset {name!r}")
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, f"{name}.csv")
    schema_path = os.path.join(out_dir, f"{name}.schema.json")
    write_table(rows, schema, csv_path, schema_path)
    return csv_path, schema_path


def _table(rows: list[dict], schema: dict, source: str) -> RawTable:
    cols = {}
    for c, kind in schema["columns"].items():
        vals = [r[c] for r in rows]
        cols[c] = np.array(vals, dtype=float) if kind == NUMERIC else np.array(vals, dtype=object)
    y = np.array([int(r[schema["label"]]) for r in rows], dtype=np.uint8)
    return RawTable(list(schema["columns"]), dict(schema["columns"]), cols, schema["label"], y, source)


def load_compas(path) -> RawTable:
    """Filtered COMPAS table from the raw two-year file, or a prepared CSV."""
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    if "days_b_screening_arrest" in header:
        return _table(compas_rows(path), COMPAS_SCHEMA, str(path))
    return load_raw(path, COMPAS_SCHEMA)


def load_adult(path) -> RawTable:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline()
    if header.startswith("age,"):
        return load_raw(path, ADULT_SCHEMA)
    return _table(adult_rows(path), ADULT_SCHEMA, str(path))
