"""Canonical dataset files: one JSON object per line.

Keys: ``samples``, ``sample_period_s``, ``first_path_index``, ``C``, ``N``,
``F`` (three values), ``A_db``, ``pair_id`` and optionally ``bias_m`` and
``label`` (``"LOS"``, ``"DP_NLOS"`` or ``"NDP_NLOS"``).

External datasets are mapped onto this format by adapters registered with
:func:`register_adapter`.
"""

from __future__ import annotations

import csv
import json
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List


from .cir import ChannelDiagnostics, PropagationClass, RangingRecord, Waveform
from .errors import DatasetError, NlosError

REQUIRED_KEYS = ("samples", "sample_period_s", "first_path_index", "C", "N", "F", "A_db", "pair_id")
OPTIONAL_KEYS = ("bias_m", "label")


def record_to_dict(rec: RangingRecord) -> dict:
    w, d = rec.waveform, rec.diagnostics
    out = {
        "samples": w.samples.tolist(),
        "sample_period_s": w.sample_period,
        "first_path_index": w.first_path_index,
        "C": d.cir_power_C,
        "N": d.preamble_count_N,
        "F": list(d.first_path_amps_F),
        "A_db": d.prf_constant_A,
        "pair_id": rec.pair_id,
    }
    if rec.bias_m is not None:
        out["bias_m"] = rec.bias_m
    if rec.label is not None:
        out["label"] = rec.label.value
    return out


def _real(obj, key):
    value = obj[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise DatasetError(f"key {key!r} must be a number", key=key)
    if not math.isfinite(value):
        raise DatasetError(f"key {key!r} is not finite", key=key)
    return float(value)


def record_from_dict(obj) -> RangingRecord:
    if not isinstance(obj, dict):
        raise DatasetError("record must be an object")
    for key in REQUIRED_KEYS:
        if key not in obj:
            raise DatasetError(f"missing required key {key!r}", key=key)
    samples = obj["samples"]
    if not isinstance(samples, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in samples
    ):
        raise DatasetError("key 'samples' must be an array of numbers", key="samples")
    if not all(math.isfinite(v) for v in samples):
        raise DatasetError("key 'samples' holds non-finite values", key="samples")
    fp = obj["first_path_index"]
    if isinstance(fp, bool) or not isinstance(fp, int):
        raise DatasetError("key 'first_path_index' must be an integer", key="first_path_index")
    amps = obj["F"]
    if not isinstance(amps, list) or len(amps) != 3:
        raise DatasetError("key 'F' must hold three numbers", key="F")
    amps = [_real({"F": a}, "F") for a in amps]
    label = obj.get("label")
    if label is not None:
        if label not in {c.value for c in PropagationClass}:
            raise DatasetError(f"bad label {label!r}", key="label")
        label = PropagationClass(label)
    bias = obj.get("bias_m")
    if bias is not None:
        bias = _real(obj, "bias_m")
    pair_id = obj["pair_id"]
    if not isinstance(pair_id, str) or not pair_id:
        raise DatasetError("key 'pair_id' must be a non-empty string", key="pair_id")
    try:
        waveform = Waveform(samples, _real(obj, "sample_period_s"), fp)
        diag = ChannelDiagnostics(_real(obj, "C"), _real(obj, "N"), tuple(amps), _real(obj, "A_db"))
        return RangingRecord(waveform, diag, pair_id, bias, label)
    except DatasetError:
        raise
    except NlosError as exc:
        raise DatasetError(str(exc)) from exc


def dumps_record(rec: RangingRecord) -> str:
    return json.dumps(record_to_dict(rec), sort_keys=True, allow_nan=False)


def atomic_write(path, data) -> None:
    """Write ``data`` (str or bytes) to ``path`` via a temp file and rename."""
    path = Path(path)
    payload = data.encode("utf-8") if isinstance(data, str) else data
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_dataset(records: Iterable[RangingRecord], path) -> None:
    lines = [dumps_record(r) for r in records]
    atomic_write(path, "".join(line + "\n" for line in lines))


@dataclass
class ReadReport:
    records: List[RangingRecord]
    skipped: int = 0
    errors: List[str] = field(default_factory=list)


def parse_dataset(text: str, strict: bool = True) -> ReadReport:
    """Parse canonical lines; lenient mode skips bad lines and counts them."""
    report = ReadReport([])
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"invalid JSON: {exc.msg}") from exc
            report.records.append(record_from_dict(obj))
        except DatasetError as exc:
            err = DatasetError(str(exc), line=lineno, key=exc.key)
            if strict:
                raise err from exc
            report.skipped += 1
            report.errors.append(str(err))
    return report


def read_dataset(path, strict: bool = True) -> List[RangingRecord]:
    return parse_dataset(Path(path).read_text(encoding="utf-8"), strict).records


# ------------------------------------------------------------------ adapters

Adapter = Callable[..., List[RangingRecord]]
_ADAPTERS: Dict[str, Adapter] = {}


def register_adapter(name: str, reader: Adapter) -> None:
    """Make ``reader(path, **options) -> records`` available by name."""
    _ADAPTERS[name] = reader


def read_external(name: str, path, **options) -> List[RangingRecord]:
    try:
        reader = _ADAPTERS[name]
    except KeyError:
        raise DatasetError(f"unknown adapter {name!r}; known: {sorted(_ADAPTERS)}") from None
    return reader(path, **options)


def read_complex_taps_csv(
    path,
    sample_period_s: float,
    prf_constant_db: float,
    delimiter: str = ",",
) -> List[RangingRecord]:
    """Adapter for CSV exports holding raw complex accumulator taps.

    Expected columns: ``pair_id``, ``fp_index``, ``C``, ``N``, ``F1``, ``F2``,
    ``F3``, optional ``bias_m`` and ``label``, then alternating ``re*`` /
    ``im*`` tap columns.  Taps are converted to magnitudes here, at the
    boundary, so the rest of the package only ever sees ``|r|``.
    """
    records = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh, delimiter=delimiter)
        re_cols = [c for c in reader.fieldnames or () if c.startswith("re")]
        im_cols = [c for c in reader.fieldnames or () if c.startswith("im")]
        if not re_cols or len(re_cols) != len(im_cols):
            raise DatasetError("CSV needs matching re*/im* tap columns")
        for lineno, row in enumerate(reader, start=2):
            try:
                waveform = Waveform.from_complex_taps(
                    [float(row[c]) for c in re_cols],
                    [float(row[c]) for c in im_cols],
                    sample_period_s,
                    int(row["fp_index"]),
                )
                diag = ChannelDiagnostics(
                    float(row["C"]), float(row["N"]),
                    (float(row["F1"]), float(row["F2"]), float(row["F3"])), prf_constant_db,
                )
                bias = float(row["bias_m"]) if row.get("bias_m") not in (None, "") else None
                label = PropagationClass.parse(row["label"]) if row.get("label") else None
                records.append(RangingRecord(waveform, diag, row["pair_id"], bias, label))
            except (KeyError, ValueError) as exc:
                raise DatasetError(f"bad row: {exc}", line=lineno) from exc
    return records


register_adapter("complex_taps_csv", read_complex_taps_csv)
