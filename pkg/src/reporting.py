"""CSV and JSON tables emitted by the command line."""

import csv
import json
import math
from pathlib import Path
from typing import Any, Iterable, Mapping, Optional, Sequence

from src.model import CustomerOutcome

OUTCOME_HEADER = ['index', 'arrival_time', 'wait', 'service_start', 'served_rank']
SERVED_HEADER = ['rank', 'wait']
ANALYTIC_HEADER = ['x', 'F_T', 'f_rho']
RETURN_LAW_HEADER = ['k', 'q_hat']
BUSY_HEADER = ['sample', 'duration', 'tau3']


def format_float(value: Optional[float]) -> str:
    """17 significant digits, ``inf`` for infinity, empty for absent values."""
    if value is None:
        return ''
    if math.isinf(value):
        return 'inf' if value > 0 else '-inf'
    return f"{value:.17g}"


def format_int(value: Optional[int]) -> str:
    return '' if value is None else str(int(value))


def parse_float(text: str) -> Optional[float]:
    return None if text == '' else float(text)


def parse_int(text: str) -> Optional[int]:
    return None if text == '' else int(text)


def write_table(path: Path, header: Sequence[str], rows: Iterable[Sequence[str]]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(header)
        writer.writerows(rows)


def read_table(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline='') as f:
        reader = csv.reader(f)
        header = next(reader)
        return header, [row for row in reader]


def outcome_row(outcome: CustomerOutcome) -> list[str]:
    return [
        format_int(outcome.index),
        format_float(outcome.arrival_time),
        format_float(outcome.wait),
        format_float(outcome.service_start),
        format_int(outcome.served_rank),
    ]


def write_outcomes_csv(path: Path, outcomes: Sequence[CustomerOutcome]) -> None:
    write_table(path, OUTCOME_HEADER, (outcome_row(o) for o in outcomes))


def read_outcomes_csv(path: Path) -> list[CustomerOutcome]:
    header, rows = read_table(path)
    if header != OUTCOME_HEADER:
        raise ValueError(f"unexpected outcome header {header}")
    return [
        CustomerOutcome(
            index=int(r[0]),
            arrival_time=float(r[1]),
            wait=float(r[2]),
            service_start=parse_float(r[3]),
            served_rank=parse_int(r[4]),
        )
        for r in rows
    ]


def write_served_csv(path: Path, waits: Sequence[float], first_rank: int = 0) -> None:
    write_table(path, SERVED_HEADER,
                ([str(first_rank + i), format_float(w)] for i, w in enumerate(waits)))


def write_analytic_csv(path: Path, rows: Iterable[tuple[float, float, float]]) -> None:
    write_table(path, ANALYTIC_HEADER, ([format_float(v) for v in row] for row in rows))


def write_json(path: Path, payload: Any) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(payload, f, indent=2, sort_keys=True)
        f.write('\n')


def served_path(path: Path) -> Path:
    """Companion file for served waits: ``out.csv`` -> ``out.served.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}.served{path.suffix}")


def outcome_json(outcome: CustomerOutcome) -> dict:
    """JSON-safe outcome: infinite waits become the string ``inf``."""
    record = outcome.to_dict()
    if math.isinf(record['wait']):
        record['wait'] = 'inf'
    return record


def read_analytic_csv(path: Path) -> list[tuple[float, float, float]]:
    header, rows = read_table(path)
    if header != ANALYTIC_HEADER:
        raise ValueError(f"unexpected analytic header {header}")
    return [(float(r[0]), float(r[1]), float(r[2])) for r in rows]


def write_return_law_csv(path: Path, q_hat: Mapping[int, float]) -> None:
    write_table(path, RETURN_LAW_HEADER,
                ([str(k), format_float(q_hat[k])] for k in sorted(q_hat)))


def write_busy_csv(path: Path, samples: Sequence[Any]) -> None:
    """One row per busy-period sample; ``duration`` is ``inf`` when the ceiling was hit."""
    write_table(path, BUSY_HEADER, (
        [str(i), format_float(s.duration), format_int(s.tau3)] for i, s in enumerate(samples)
    ))
