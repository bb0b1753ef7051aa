"""LibSVM-format parsing, dataset partitioning, run configuration, and
CSV/SVG output writers."""

import json
import math
import os
from dataclasses import dataclass, field, fields

import numpy as np

from . import compressors as comp
from .problems import ClientShard, LogisticProblem


class ParseError(ValueError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass
class RawDataset:
    """Sparse rows of (label, [(1-based index, value), ...]) with labels
    already mapped to +/-1 (any non-positive raw label becomes -1)."""

    rows: list
    max_index: int


def parse_libsvm(source):
    """Parse LibSVM text: `label idx:val idx:val ...`, '#' comments.

    `source` may be a string, an open text file, or an iterable of
    lines. Indices must be strictly increasing within a row.
    """
    if isinstance(source, str):
        lines = source.splitlines()
    else:
        lines = source
    rows = []
    max_index = 0
    n_lines = 0
    for line_no, line in enumerate(lines, start=1):
        n_lines += 1
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            raw_label = float(tokens[0])
        except ValueError:
            raise ParseError(f"non-numeric label {tokens[0]!r}", line_no) from None
        label = 1 if raw_label > 0 else -1
        feats = []
        prev = 0
        for tok in tokens[1:]:
            idx_s, _, val_s = tok.partition(":")
            if not val_s:
                raise ParseError(f"malformed feature token {tok!r}", line_no)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"non-numeric feature token {tok!r}", line_no) from None
            if idx <= prev:
                raise ParseError(
                    f"feature index {idx} is not strictly increasing", line_no
                )
            prev = idx
            feats.append((idx, val))
        max_index = max(max_index, prev)
        rows.append((label, feats))
    if not rows:
        raise ParseError("no data rows found" if n_lines else "empty input")
    return RawDataset(rows=rows, max_index=max_index)


def serialize_libsvm(dataset):
    """Inverse of parse_libsvm; float values use repr so a round trip is
    bit-exact."""
    lines = []
    for label, feats in dataset.rows:
        parts = [f"{label:+d}"] + [f"{idx}:{val!r}" for idx, val in feats]
        lines.append(" ".join(parts))
    return "\n".join(lines) + "\n"


def densify(dataset, d=None):
    """Dense feature matrix and label vector from a RawDataset."""
    if d is None:
        d = dataset.max_index
    if dataset.max_index > d:
        raise ValueError(
            f"feature index {dataset.max_index} exceeds dimension {d}"
        )
    x = np.zeros((len(dataset.rows), d))
    y = np.empty(len(dataset.rows))
    for i, (label, feats) in enumerate(dataset.rows):
        y[i] = label
        for idx, val in feats:
            x[i, idx - 1] = val
    return x, y


def partition(dataset, n, d=None, lam=1e-3):
    """Split rows into n contiguous equal shards of m = floor(rows/n),
    dropping excess rows from the tail."""
    rows = len(dataset.rows)
    if n > rows:
        raise ValueError(f"cannot split {rows} rows across {n} clients")
    m = rows // n
    x, y = densify(dataset, d)
    shards = []
    for i in range(n):
        sl = slice(i * m, (i + 1) * m)
        shards.append(ClientShard(features=x[sl], labels=y[sl], client_id=i))
    return LogisticProblem(shards=shards, lam=lam)


@dataclass
class RunRecord:
    round: int
    fgap: float
    dist: float
    up_bits: int
    down_bits: int
    wall_ms: float = 0.0


CSV_HEADER = "round,fgap,dist,up_bits,down_bits,wall_ms"


def write_csv(records, path):
    if not records:
        raise ValueError("refusing to write an empty record list")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(CSV_HEADER + "\n")
        for r in records:
            fh.write(
                f"{r.round},{r.fgap!r},{r.dist!r},{r.up_bits},{r.down_bits},{r.wall_ms!r}\n"
            )


def read_csv(path):
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip()
        if header != CSV_HEADER:
            raise ValueError(f"unexpected CSV header in {path}: {header!r}")
        records = []
        for line in fh:
            parts = line.strip().split(",")
            if len(parts) != 6:
                raise ValueError(f"malformed CSV row in {path}: {line!r}")
            records.append(
                RunRecord(
                    round=int(parts[0]),
                    fgap=float(parts[1]),
                    dist=float(parts[2]),
                    up_bits=int(parts[3]),
                    down_bits=int(parts[4]),
                    wall_ms=float(parts[5]),
                )
            )
    if not records:
        raise ValueError(f"CSV {path} contains no data rows")
    return records


# --- run configuration --------------------------------------------------

_ALGORITHMS = ("bl1", "bl2", "bl3", "newton", "gd", "diana", "fednl", "fednl-pp")
_BASES = ("standard", "triangular_sym", "psd_sym", "data_subspace")


@dataclass
class RunConfig:
    algorithm: str
    n: int
    lam: float = 1e-3
    name: str = "run"
    dataset: str = None  # path to a LibSVM file; None selects synth data
    d: int = None  # feature-dimension override / synth dimension
    r: int = 10  # synth intrinsic dimension
    m: int = 50  # synth rows per client
    alpha: float = None  # None: default by compressor class
    eta: float = None
    p: float = 1.0
    tau: int = None  # None: full participation
    c: float = 0.1
    option: int = 2
    matrix_compressor: str = "identity"
    model_compressor: str = "identity"
    gradient_in_basis: bool = False
    basis: str = "standard"
    seed: int = 0
    max_rounds: int = 200
    bits_budget: float = 1e9
    fgap_target: float = 1e-10
    float_bits: int = 64
    init_hessian: str = "exact"  # or "zero"
    csv_out: str = None
    record_wall_time: bool = False
    count_downloads: bool = True

    def __post_init__(self):
        if self.algorithm not in _ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.basis not in _BASES:
            raise ValueError(f"unknown basis {self.basis!r}")
        if not 0.0 < self.p <= 1.0:
            raise ValueError("p must be in (0, 1]")
        if self.n < 1:
            raise ValueError("n must be positive")
        if self.tau is not None and not 1 <= self.tau <= self.n:
            raise ValueError("tau must be in [1, n]")
        for name in ("alpha", "eta"):
            v = getattr(self, name)
            if v is not None and v <= 0:
                raise ValueError(f"{name} must be positive")
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.option not in (1, 2):
            raise ValueError("option must be 1 or 2")
        if self.float_bits not in (32, 64):
            raise ValueError("float_bits must be 32 or 64")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.init_hessian not in ("exact", "zero"):
            raise ValueError("init_hessian must be 'exact' or 'zero'")

    @classmethod
    def from_dict(cls, data):
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}

    def replace(self, **kw):
        d = self.to_dict()
        d.update(kw)
        return RunConfig.from_dict(d)


def load_config(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    if not isinstance(data, dict):
        raise ValueError("config must be a flat JSON object")
    return RunConfig.from_dict(data)


def parse_compressor_spec(spec, size, d=None, float_bits=64):
    """Build a compressor from a config string.

    Forms: identity | topk:K | topk_sym:K | randk:K | rankr:R |
    dither:S[:q] | natural | rrank:R[:S] | nrank:R | rtop:K[:S] |
    ntop:K | sym:<spec>. `size` is the total entry count of the
    compressed object; `d` its side length when it is a matrix.
    """
    parts = spec.strip().lower().split(":")
    kind, args = parts[0], parts[1:]

    def _int(ix, default=None):
        if ix >= len(args):
            if default is None:
                raise ValueError(f"compressor spec {spec!r} is missing an argument")
            return default
        return int(args[ix])

    if kind == "sym":
        inner = parse_compressor_spec(":".join(parts[1:]), size, d, float_bits)
        return comp.Symmetrized(inner)
    if kind == "identity":
        return comp.Identity(size, float_bits)
    if kind == "topk":
        return comp.TopK(_int(0), size, float_bits)
    if kind == "topk_sym":
        if d is None:
            raise ValueError("topk_sym needs a matrix domain")
        return comp.TopKSym(_int(0), d, float_bits)
    if kind == "randk":
        return comp.RandK(_int(0), size, float_bits)
    if kind == "rankr":
        if d is None:
            raise ValueError("rankr needs a matrix domain")
        return comp.RankR(_int(0), d, float_bits)
    if kind == "dither":
        s = _int(0)
        q = math.inf if len(args) > 1 and args[1] == "inf" else 2
        return comp.RandomDithering(s, q, size, float_bits)
    if kind == "natural":
        return comp.NaturalCompression(size, float_bits)
    if kind == "rrank":
        if d is None:
            raise ValueError("rrank needs a matrix domain")
        r = _int(0)
        s = _int(1, default=max(1, round(math.sqrt(d))))
        q1 = comp.RandomDithering(s, 2, d, float_bits)
        q2 = comp.RandomDithering(s, 2, d, float_bits)
        return comp.ComposedRankUnbiased(r, q1, q2, d, float_bits)
    if kind == "nrank":
        if d is None:
            raise ValueError("nrank needs a matrix domain")
        r = _int(0)
        q1 = comp.NaturalCompression(d, float_bits)
        q2 = comp.NaturalCompression(d, float_bits)
        return comp.ComposedRankUnbiased(r, q1, q2, d, float_bits)
    if kind == "rtop":
        k = _int(0)
        s = _int(1, default=max(1, round(math.sqrt(k))))
        inner = comp.RandomDithering(s, 2, k, float_bits)
        return comp.ComposedSparseUnbiased(k, inner, size, float_bits)
    if kind == "ntop":
        k = _int(0)
        inner = comp.NaturalCompression(k, float_bits)
        return comp.ComposedSparseUnbiased(k, inner, size, float_bits)
    raise ValueError(f"unknown compressor spec {spec!r}")


# --- SVG chart ----------------------------------------------------------

def write_svg(series, path, xlabel="bits per node", ylabel="f gap",
              title=None, width=640, height=440):
    """Log-y line chart: one polyline per (name, xs, ys) series.

    Non-positive y values are clipped to 1e-300 before the log scale.
    """
    if not series:
        raise ValueError("refusing to plot an empty series list")
    for name, xs, ys in series:
        if len(xs) == 0 or len(xs) != len(ys):
            raise ValueError(f"series {name!r} is empty or ragged")

    margin_l, margin_r, margin_t, margin_b = 64, 16, 28, 44
    plot_w = width - margin_l - margin_r
    plot_h = height - margin_t - margin_b

    all_x = [x for _, xs, _ in series for x in xs]
    all_y = [max(float(y), 1e-300) for _, _, ys in series for y in ys]
    x_lo, x_hi = min(all_x), max(all_x)
    y_lo, y_hi = math.log10(min(all_y)), math.log10(max(all_y))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def px(x):
        return margin_l + (x - x_lo) / (x_hi - x_lo) * plot_w

    def py(y):
        ly = math.log10(max(float(y), 1e-300))
        return margin_t + (y_hi - ly) / (y_hi - y_lo) * plot_h

    palette = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
               "#8c564b", "#17becf", "#7f7f7f"]
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<rect x="{margin_l}" y="{margin_t}" width="{plot_w}" height="{plot_h}" '
        'fill="none" stroke="#333"/>',
    ]
    if title:
        out.append(
            f'<text x="{width / 2:.1f}" y="18" text-anchor="middle" '
            f'font-size="13" font-family="sans-serif">{title}</text>'
        )
    # y ticks at integer decades
    for dec in range(math.ceil(y_lo), math.floor(y_hi) + 1):
        y = py(10.0 ** dec)
        out.append(
            f'<line x1="{margin_l}" y1="{y:.1f}" x2="{margin_l - 4}" y2="{y:.1f}" '
            'stroke="#333"/>'
        )
        out.append(
            f'<text x="{margin_l - 7}" y="{y + 4:.1f}" text-anchor="end" '
            f'font-size="10" font-family="sans-serif">1e{dec}</text>'
        )
    # x ticks
    for frac in (0.0, 0.25, 0.5, 0.75, 1.0):
        xv = x_lo + frac * (x_hi - x_lo)
        x = px(xv)
        out.append(
            f'<line x1="{x:.1f}" y1="{margin_t + plot_h}" x2="{x:.1f}" '
            f'y2="{margin_t + plot_h + 4}" stroke="#333"/>'
        )
        out.append(
            f'<text x="{x:.1f}" y="{margin_t + plot_h + 16}" text-anchor="middle" '
            f'font-size="10" font-family="sans-serif">{xv:.3g}</text>'
        )
    out.append(
        f'<text x="{margin_l + plot_w / 2:.1f}" y="{height - 8}" '
        f'text-anchor="middle" font-size="11" font-family="sans-serif">{xlabel}</text>'
    )
    out.append(
        f'<text x="14" y="{margin_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'font-size="11" font-family="sans-serif" '
        f'transform="rotate(-90 14 {margin_t + plot_h / 2:.1f})">{ylabel}</text>'
    )
    for si, (name, xs, ys) in enumerate(series):
        color = palette[si % len(palette)]
        pts = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in zip(xs, ys))
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>'
        )
        ly = margin_t + 14 + 14 * si
        lx = margin_l + plot_w - 150
        out.append(
            f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 18}" y2="{ly - 4}" '
            f'stroke="{color}" stroke-width="1.5"/>'
        )
        out.append(
            f'<text x="{lx + 23}" y="{ly}" font-size="10" '
            f'font-family="sans-serif">{name}</text>'
        )
    out.append("</svg>")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(out) + "\n")
