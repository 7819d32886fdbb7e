"""Reading and writing model, prior and design files.

Model files are plain text split into sections::

    # house flies, continuation-ratio logit
    [model]
    link = continuation
    J = 3
    d = 1
    h1 = (0) (1) (2)
    h2 = (0) (1)
    hc =

    [theta]
    -1.935 -0.02642 0.0003174 -9.159 0.06386

    [points]
    80
    100

    [grid]
    80 200 5

Predictor blocks list monomials as exponent tuples over the ``d`` factors, so
``(0)`` is the intercept and ``(1,2)`` is ``x1 * x2**2``. ``[theta]`` holds
``beta_1, ..., beta_{J-1}, zeta`` in that order, spread over any number of
lines. Each ``[points]`` line is one design point; each ``[grid]`` line is
``low high step`` for one factor. Blank lines and ``#`` comments are ignored.

Prior files are CSV with one draw per row and a header naming every
parameter: ``beta<j>_<k>`` for coefficient ``k`` of block ``j`` and
``zeta<k>`` for the common block, all 1-based.

Designs are exchanged as JSON records (see :func:`design_record`) or as text
files with a ``[weights]`` or ``[counts]`` section whose lines hold the point
coordinates followed by the weight or count.
"""

from __future__ import annotations

import csv
import json
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import OptDesignError
from .fisher import DesignApprox, DesignExact
from .model import LinkKind, ModelSpec, PredictorSpec

__all__ = [
    "ParseError",
    "ModelFile",
    "parse_model_text",
    "read_model_file",
    "read_theta_file",
    "parameter_names",
    "read_prior_csv",
    "parse_points_arg",
    "parse_grid_arg",
    "design_record",
    "design_from_record",
    "read_design_file",
    "write_json",
]

SECTIONS = ("model", "theta", "points", "grid")
_TUPLE = re.compile(r"\(([^()]*)\)")


class ParseError(OptDesignError, ValueError):
    """Malformed input file, with a position for diagnostics."""

    def __init__(self, message: str, source: str = "<input>", line: int = 0, col: int = 0):
        self.source, self.line, self.col = source, line, col
        super().__init__(f"{source}:{line}:{col}: {message}")


@dataclass
class ModelFile:
    """Contents of a model file."""

    model: ModelSpec
    theta: np.ndarray | None = None
    points: np.ndarray | None = None
    grid: list[tuple[float, float, float]] | None = None
    source: str = "<input>"


@dataclass
class _Line:
    number: int
    text: str
    col: int


@dataclass
class _Sections:
    body: dict[str, list[_Line]] = field(default_factory=dict)
    starts: dict[str, int] = field(default_factory=dict)


def _split_sections(text: str, source: str, allowed) -> _Sections:
    out = _Sections()
    current = None
    for number, raw in enumerate(text.splitlines(), start=1):
        stripped = raw.split("#", 1)[0].rstrip()
        if not stripped.strip():
            continue
        col = len(stripped) - len(stripped.lstrip()) + 1
        body = stripped.strip()
        if body.startswith("["):
            if not body.endswith("]"):
                raise ParseError("unterminated section header", source, number, col)
            name = body[1:-1].strip().lower()
            if name not in allowed:
                raise ParseError(f"unknown section [{name}]", source, number, col)
            if name in out.body:
                raise ParseError(f"duplicate section [{name}]", source, number, col)
            out.body[name] = []
            out.starts[name] = number
            current = name
            continue
        if current is None:
            raise ParseError("content before the first section header", source, number, col)
        out.body[current].append(_Line(number, body, col))
    return out


def _numbers(line: _Line, source: str) -> list[float]:
    vals = []
    for match in re.finditer(r"[^\s,]+", line.text):
        try:
            vals.append(float(match.group()))
        except ValueError:
            raise ParseError(f"not a number: {match.group()!r}", source, line.number,
                             line.col + match.start()) from None
    return vals


def _parse_terms(value: str, d: int, line: _Line, offset: int, source: str) -> PredictorSpec:
    # blank out well-formed tuples; whatever remains is an error
    rest = _TUPLE.sub(lambda m: " " * len(m.group()), value)
    if rest.strip():
        start = len(rest) - len(rest.lstrip())
        raise ParseError(f"expected exponent tuples like (0) (1), got {rest.strip()!r}",
                         source, line.number, line.col + offset + start)
    terms = []
    for match in _TUPLE.finditer(value):
        parts = [s.strip() for s in match.group(1).split(",") if s.strip()]
        try:
            exps = tuple(int(s) for s in parts)
        except ValueError:
            raise ParseError(f"bad exponent tuple {match.group()!r}", source, line.number,
                             line.col + offset + match.start()) from None
        if len(exps) != d or any(e < 0 for e in exps):
            raise ParseError(f"exponent tuple {match.group()} needs {d} nonnegative entries",
                             source, line.number, line.col + offset + match.start())
        terms.append(exps)
    return PredictorSpec(tuple(terms))


def _parse_model_section(lines: list[_Line], source: str, header: int) -> ModelSpec:
    keys: dict[str, tuple[str, _Line, int]] = {}
    for line in lines:
        if "=" not in line.text:
            raise ParseError("expected key = value", source, line.number, line.col)
        key, value = line.text.split("=", 1)
        key = key.strip().lower()
        if key in keys:
            raise ParseError(f"duplicate key {key!r}", source, line.number, line.col)
        # offset of the value's first character within the line
        off = line.text.index("=") + 1 + len(value) - len(value.lstrip())
        keys[key] = (value.strip(), line, off)
    for req in ("link", "j", "d"):
        if req not in keys:
            raise ParseError(f"[model] is missing {req!r}", source, header, 1)
    link_text, line, off = keys["link"]
    try:
        link = LinkKind(link_text.lower())
    except ValueError:
        raise ParseError(f"unknown link {link_text!r}; expected one of "
                         f"{', '.join(k.value for k in LinkKind)}", source, line.number,
                         line.col + off) from None
    ints = {}
    for key in ("j", "d"):
        text, line, off = keys[key]
        try:
            ints[key] = int(text)
        except ValueError:
            raise ParseError(f"{key} must be an integer", source, line.number,
                             line.col + off) from None
    J, d = ints["j"], ints["d"]
    if J < 2 or d < 1:
        raise ParseError("need J >= 2 and d >= 1", source, keys["j"][1].number, 1)
    blocks = []
    for j in range(1, J):
        if f"h{j}" not in keys:
            raise ParseError(f"[model] is missing h{j}", source, header, 1)
        text, line, off = keys[f"h{j}"]
        spec = _parse_terms(text, d, line, off, source)
        if spec.size == 0:
            raise ParseError(f"h{j} needs at least one term", source, line.number, line.col)
        blocks.append(spec)
    hc = PredictorSpec()
    if "hc" in keys:
        text, line, off = keys["hc"]
        hc = _parse_terms(text, d, line, off, source)
    known = {"link", "j", "d", "hc"} | {f"h{j}" for j in range(1, J)}
    for key, (_, line, _) in keys.items():
        if key not in known:
            raise ParseError(f"unknown key {key!r}", source, line.number, line.col)
    return ModelSpec(d, J, link, tuple(blocks), hc)


def parse_model_text(text: str, source: str = "<input>") -> ModelFile:
    """Parse the contents of a model file.

    Raises
    ------
    ParseError
        With the line and column of the first problem.
    """
    sections = _split_sections(text, source, SECTIONS)
    if "model" not in sections.body:
        raise ParseError("missing [model] section", source, 1, 1)
    model = _parse_model_section(sections.body["model"], source, sections.starts["model"])
    out = ModelFile(model, source=source)
    if "theta" in sections.body:
        vals = [v for line in sections.body["theta"] for v in _numbers(line, source)]
        if len(vals) != model.p:
            raise ParseError(f"[theta] has {len(vals)} values, model needs {model.p}", source,
                             sections.starts["theta"], 1)
        out.theta = np.array(vals)
    if "points" in sections.body:
        rows = []
        for line in sections.body["points"]:
            vals = _numbers(line, source)
            if len(vals) != model.d:
                raise ParseError(f"point has {len(vals)} coordinates, expected {model.d}",
                                 source, line.number, line.col)
            rows.append(vals)
        if not rows:
            raise ParseError("[points] is empty", source, sections.starts["points"], 1)
        out.points = np.array(rows, dtype=float)
    if "grid" in sections.body:
        grid = []
        for line in sections.body["grid"]:
            vals = _numbers(line, source)
            if len(vals) != 3:
                raise ParseError("grid line needs: low high step", source, line.number, line.col)
            if vals[2] <= 0 or vals[1] < vals[0]:
                raise ParseError("grid needs step > 0 and high >= low", source, line.number,
                                 line.col)
            grid.append(tuple(vals))
        if len(grid) != model.d:
            raise ParseError(f"[grid] needs one line per factor ({model.d})", source,
                             sections.starts["grid"], 1)
        out.grid = grid
    return out


def _read_text(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise ParseError(f"cannot read file: {exc.strerror}", str(path), 0, 0) from None


def read_model_file(path) -> ModelFile:
    return parse_model_text(_read_text(path), str(path))


def read_theta_file(path, model: ModelSpec) -> np.ndarray:
    """A parameter vector given as numbers separated by spaces, commas or newlines."""
    text = _read_text(path)
    vals = []
    for number, raw in enumerate(text.splitlines(), start=1):
        body = raw.split("#", 1)[0]
        if body.strip():
            vals.extend(_numbers(_Line(number, body, 1), str(path)))
    if len(vals) != model.p:
        raise ParseError(f"theta has {len(vals)} values, model needs {model.p}", str(path), 1, 1)
    return np.array(vals)


def parameter_names(model: ModelSpec) -> list[str]:
    """Column names for prior files, in parameter order."""
    names = [f"beta{j}_{k}" for j, size in enumerate(model.p_blocks, start=1)
             for k in range(1, size + 1)]
    names += [f"zeta{k}" for k in range(1, model.p_c + 1)]
    return names


def read_prior_csv(path, model: ModelSpec) -> tuple[np.ndarray, int]:
    """Parameter draws from a CSV file.

    Returns
    -------
    thetas : ndarray, shape (k, p)
    skipped : int
        Rows dropped because a value was missing or not a finite number.
    """
    text = _read_text(path)
    reader = csv.reader(text.splitlines())
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise ParseError("prior file is empty", str(path), 1, 1) from None
    names = parameter_names(model)
    missing = [n for n in names if n not in header]
    if missing:
        raise ParseError(f"prior header lacks columns {missing}", str(path), 1, 1)
    extra = [h for h in header if h not in names]
    if extra:
        raise ParseError(f"prior header has unknown columns {extra}", str(path), 1, 1)
    index = [header.index(n) for n in names]
    rows, skipped = [], 0
    for row in reader:
        if not any(cell.strip() for cell in row):
            continue
        try:
            vals = [float(row[i]) for i in index]
        except (ValueError, IndexError):
            skipped += 1
            continue
        if len(row) != len(header) or not all(np.isfinite(vals)):
            skipped += 1
            continue
        rows.append(vals)
    if not rows:
        raise ParseError("prior file has no valid rows", str(path), 2, 1)
    return np.array(rows), skipped


def parse_points_arg(text: str, d: int) -> np.ndarray:
    """Points from ``"80,100,120"`` (d = 1) or ``"1,2;3,4"`` (``;`` between points)."""
    text = text.strip()
    if not text:
        raise ParseError("empty candidate list", "--points", 1, 1)
    chunks = text.split(";") if (d > 1 or ";" in text) else text.split(",")
    rows = []
    for chunk in chunks:
        parts = [s for s in re.split(r"[,\s]+", chunk.strip()) if s]
        try:
            vals = [float(s) for s in parts]
        except ValueError:
            raise ParseError(f"bad point {chunk!r}", "--points", 1, text.find(chunk) + 1) from None
        if len(vals) != d:
            raise ParseError(f"point {chunk!r} needs {d} coordinates", "--points", 1,
                             text.find(chunk) + 1)
        rows.append(vals)
    return np.array(rows, dtype=float)


def parse_grid_arg(text: str, d: int) -> list[tuple[float, float, float]]:
    """Grid from ``"low:high:step"`` per factor, factors separated by commas."""
    grid = []
    for part in text.split(","):
        pieces = part.strip().split(":")
        try:
            lo, hi, step = (float(s) for s in pieces)
        except ValueError:
            raise ParseError(f"grid factor {part!r} must be low:high:step", "--grid", 1,
                             text.find(part) + 1) from None
        if step <= 0 or hi < lo:
            raise ParseError("grid needs step > 0 and high >= low", "--grid", 1,
                             text.find(part) + 1)
        grid.append((lo, hi, step))
    if len(grid) != d:
        raise ParseError(f"grid needs {d} factors", "--grid", 1, 1)
    return grid


def design_record(design) -> dict:
    """JSON-ready record of a design; floats survive a round trip exactly."""
    rec = {"points": design.points.tolist()}
    if isinstance(design, DesignExact):
        rec["kind"] = "exact"
        rec["counts"] = [int(c) for c in design.counts]
    else:
        rec["kind"] = "approx"
        rec["weights"] = [float(w) for w in design.weights]
    return rec


def design_from_record(rec: dict):
    if "design" in rec and isinstance(rec["design"], dict):
        rec = rec["design"]
    try:
        if rec.get("kind") == "exact" or "counts" in rec:
            return DesignExact(np.array(rec["points"], dtype=float), np.array(rec["counts"]))
        return DesignApprox(np.array(rec["points"], dtype=float),
                            np.array(rec["weights"], dtype=float))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"invalid design record: {exc}") from None


def read_design_file(path, d: int):
    """A design from a JSON record or a ``[weights]`` / ``[counts]`` text file."""
    text = _read_text(path)
    source = str(path)
    if text.lstrip().startswith("{"):
        try:
            rec = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, source, exc.lineno, exc.colno) from None
        try:
            return design_from_record(rec)
        except ParseError as exc:
            raise ParseError(str(exc).split(": ", 1)[-1], source, 1, 1) from None
    sections = _split_sections(text, source, ("weights", "counts"))
    if len(sections.body) != 1:
        raise ParseError("design file needs exactly one [weights] or [counts] section", source, 1, 1)
    kind, lines = next(iter(sections.body.items()))
    pts, vals = [], []
    for line in lines:
        nums = _numbers(line, source)
        if len(nums) != d + 1:
            raise ParseError(f"expected {d} coordinates and a value", source, line.number, line.col)
        pts.append(nums[:d])
        vals.append(nums[d])
    try:
        if kind == "counts":
            return DesignExact(np.array(pts), np.array(vals))
        return DesignApprox(np.array(pts), np.array(vals))
    except ValueError as exc:
        raise ParseError(str(exc), source, sections.starts[kind], 1) from None


def write_json(path, record: dict) -> None:
    Path(path).write_text(json.dumps(record, indent=2) + "\n")
