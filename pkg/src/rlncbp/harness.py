"""Experiment orchestration: bound sweeps, sensor-network and image decoding.

Configuration files are flat ``key = value`` text (``#`` starts a comment).
Lists are comma separated; ``a..b`` is an inclusive integer range and may be
mixed into lists (``L = 0..40``, ``L = 14..20, 22``).  Every run writes its
resolved configuration as ``#`` comment lines ahead of the CSV header, so a
result file documents how it was produced.

Randomness: each Monte Carlo trial draws from its own generator seeded by
``(seed, stream, trial)``, so results do not depend on the worker count or on
the order in which trials finish.
"""
from __future__ import annotations

import csv
import io
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .bounds import ErrorBound
from .coding import make_batch, random_coding_matrix
from .decode import decode_bp
from .gf import get_field
from .model import (
    AlphabetMap,
    CorrelationGraph,
    chain_laplacian_model,
    gaussian_sensor_model,
    laplacian_noise_pmf,
    marginal_pmf_from_gaussian,
    quantize,
    sensor_correlation_graph,
)

log = logging.getLogger(__name__)

__all__ = [
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "CSV_HEADER",
    "REGIME_CODES",
    "PSNR_LOSSLESS",
    "parse_config",
    "load_config",
    "run_bound_sweep",
    "run_sensor_experiment",
    "run_image_experiment",
    "run_experiment",
    "emit_csv",
    "format_csv",
    "read_csv",
    "read_pgm",
    "write_pgm",
    "psnr_db",
    "fit_laplacian_p",
    "trial_rng",
    "image_coding_matrix",
]

CSV_HEADER = ("experiment", "N", "q", "param", "L", "metric", "value", "samples")
REGIME_CODES = {"trivial": 0, "interior": 1, "rho_one": 2}
PSNR_LOSSLESS = math.inf

# stream identifiers for the seed sequence
_STREAM_TRIAL = 1
_STREAM_LAYOUT = 2
_STREAM_IMAGE = 3


class ConfigError(ValueError):
    """Invalid or inconsistent experiment configuration."""


# --------------------------------------------------------------------------
# configuration


def _parse_scalar(tok: str):
    t = tok.strip()
    low = t.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def _parse_value(raw: str):
    items = []
    for tok in raw.split(","):
        tok = tok.strip()
        if not tok:
            raise ConfigError(f"empty list element in {raw!r}")
        if ".." in tok:
            lo, _, hi = tok.partition("..")
            try:
                lo_i, hi_i = int(lo), int(hi)
            except ValueError:
                raise ConfigError(f"bad integer range {tok!r}") from None
            if hi_i < lo_i:
                raise ConfigError(f"empty range {tok!r}")
            items.extend(range(lo_i, hi_i + 1))
        else:
            items.append(_parse_scalar(tok))
    return items


def _as_list(v, typ, key):
    vals = v if isinstance(v, list) else [v]
    out = []
    for x in vals:
        if typ is float and isinstance(x, (int, float)) and not isinstance(x, bool):
            out.append(float(x))
        elif typ is int and isinstance(x, int) and not isinstance(x, bool):
            out.append(x)
        else:
            raise ConfigError(f"{key}: expected {typ.__name__} values, got {x!r}")
    return out


def _one(v, typ, key):
    vals = _as_list(v, typ, key) if typ in (int, float) else (v if isinstance(v, list) else [v])
    if len(vals) != 1:
        raise ConfigError(f"{key}: expected a single value")
    x = vals[0]
    if typ is bool and not isinstance(x, bool):
        raise ConfigError(f"{key}: expected true/false, got {x!r}")
    if typ is str:
        x = str(x)
    return x


# per experiment: key -> (kind, default); kind is "int", "float", "ints",
# "floats", "bool", "str" or "p" (a float or the word ``fit``)
_SCHEMA = {
    "bound": {
        "N": ("int", 30),
        "q": ("ints", [32]),
        "alphabet": ("int", None),
        "p": ("floats", [0.05, 0.10, 0.15, 0.25, 0.50]),
        "L": ("ints", list(range(0, 41))),
        "delta": ("floats", []),
    },
    "sensor": {
        "N": ("int", 20),
        "q": ("ints", [8]),
        "n_bits": ("int", 3),
        "beta": ("floats", [0.01, 0.05, 0.1, 0.2]),
        "L": ("ints", list(range(14, 23))),
        "n_samples": ("int", 1000),
        "k_max": ("int", 100),
        "clip": ("float", 4.0),
        "use_prior": ("bool", True),
        "workers": ("int", 1),
    },
    "images": {
        "frames": ("str", None),
        "N": ("int", None),
        "n_bits": ("int", 4),
        "q": ("int", None),
        "L": ("ints", None),
        "k_max": ("int", 100),
        "laplace_p": ("p", "fit"),
        "window": ("int", None),
        "shared_matrix": ("bool", True),
        "use_prior": ("bool", True),
        "workers": ("int", 1),
    },
}


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    values: dict
    base_dir: Path = Path(".")

    def __getitem__(self, key):
        return self.values[key]

    def resolved_lines(self) -> list[str]:
        lines = [f"experiment = {self.experiment}"]
        for k in sorted(self.values):
            v = self.values[k]
            if isinstance(v, list):
                s = ", ".join(_fmt(x) for x in v)
            else:
                s = _fmt(v)
            lines.append(f"{k} = {s}")
        return lines


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return repr(x)
    if x is None:
        return "none"
    return str(x)


def parse_config(text: str, experiment: str, base_dir=".") -> ExperimentConfig:
    """Parse and validate a config for ``experiment`` (``bound``, ``sensor`` or ``images``)."""
    if experiment not in _SCHEMA:
        raise ConfigError(f"unknown experiment {experiment!r}")
    schema = _SCHEMA[experiment]
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        k, _, v = line.partition("=")
        k, v = k.strip(), v.strip()
        if not v:
            raise ConfigError(f"line {lineno}: missing value for {k!r}")
        if k in raw:
            raise ConfigError(f"line {lineno}: duplicate key {k!r}")
        raw[k] = v
    kind = raw.pop("experiment", experiment).strip()
    if kind not in (experiment, {"bound": "bound_sweep"}.get(experiment)):
        raise ConfigError(f"config describes a {kind!r} experiment, not {experiment!r}")
    unknown = set(raw) - set(schema)
    if unknown:
        raise ConfigError(f"unknown keys for {experiment}: {', '.join(sorted(unknown))}")
    vals = {}
    for key, (typ, default) in schema.items():
        if key not in raw:
            vals[key] = list(default) if isinstance(default, list) else default
            continue
        if typ == "str":
            vals[key] = raw[key]
            continue
        parsed = _parse_value(raw[key])
        if typ == "ints":
            vals[key] = _as_list(parsed, int, key)
        elif typ == "floats":
            vals[key] = _as_list(parsed, float, key)
        elif typ == "int":
            vals[key] = _one(parsed, int, key)
        elif typ == "float":
            vals[key] = float(_one(parsed, float, key))
        elif typ == "bool":
            vals[key] = _one(parsed, bool, key)
        elif typ == "p":
            x = parsed[0] if len(parsed) == 1 else None
            if x == "fit":
                vals[key] = "fit"
            else:
                vals[key] = float(_one(parsed, float, key))
    cfg = ExperimentConfig(experiment, vals, Path(base_dir))
    _validate(cfg)
    return cfg


def load_config(path, experiment: str) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot read config {path}: {e.strerror or e}") from None
    return parse_config(text, experiment, path.parent)


def _validate(cfg: ExperimentConfig):
    v = cfg.values
    qs = v["q"] if isinstance(v["q"], list) else [v["q"]]
    for q in qs:
        if q is not None and (q < 2 or q > 256 or q & (q - 1)):
            raise ConfigError(f"q must be a power of two in [2, 256], got {q}")
    if cfg.experiment == "bound":
        if v["N"] < 1:
            raise ConfigError("N must be >= 1")
        alpha = v["alphabet"]
        if alpha is not None and (alpha < 2 or alpha > min(qs)):
            raise ConfigError("alphabet size must lie in [2, min(q)]")
        if any(not 0 < p < 1 for p in v["p"]):
            raise ConfigError("Laplacian parameters p must lie in (0, 1)")
        if any(L < 0 for L in v["L"]):
            raise ConfigError("L must be non-negative")
        if any(not 0 < d < 1 for d in v["delta"]):
            raise ConfigError("delta must lie in (0, 1)")
    elif cfg.experiment == "sensor":
        if v["N"] < 2:
            raise ConfigError("N must be >= 2")
        if not 1 <= v["n_bits"] <= 8:
            raise ConfigError("n_bits must lie in [1, 8]")
        if any(q < (1 << v["n_bits"]) for q in qs):
            raise ConfigError("field size must be at least 2^n_bits")
        if any(b <= 0 for b in v["beta"]):
            raise ConfigError("beta must be positive")
        if v["n_samples"] < 1 or v["k_max"] < 1 or v["workers"] < 1:
            raise ConfigError("n_samples, k_max and workers must be >= 1")
        if any(L < 0 for L in v["L"]):
            raise ConfigError("L must be non-negative")
        if v["clip"] <= 0:
            raise ConfigError("clip must be positive")
    else:
        if not v["frames"]:
            raise ConfigError("images experiment needs 'frames' (a directory of PGM files)")
        if v["n_bits"] not in range(1, 9):
            raise ConfigError("n_bits must lie in [1, 8]")
        if v["q"] is not None and v["q"] < (1 << v["n_bits"]):
            raise ConfigError("field size must be at least 2^n_bits")
        if v["k_max"] < 1 or v["workers"] < 1:
            raise ConfigError("k_max and workers must be >= 1")
        if v["laplace_p"] != "fit" and not 0 < v["laplace_p"] < 1:
            raise ConfigError("laplace_p must be 'fit' or lie in (0, 1)")
        if v["window"] is not None and v["window"] < 1:
            raise ConfigError("window must be >= 1")
        if v["L"] is not None and any(L < 0 for L in v["L"]):
            raise ConfigError("L must be non-negative")


# --------------------------------------------------------------------------
# results and CSV


@dataclass(frozen=True)
class ResultRow:
    experiment: str
    N: int
    q: int
    param: str
    L: int
    metric: str
    value: float
    samples: int

    def cells(self) -> list[str]:
        return [self.experiment, str(self.N), str(self.q), self.param, str(self.L),
                self.metric, _fmt_value(self.value), str(self.samples)]


def _fmt_value(x) -> str:
    x = float(x)
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return repr(x)


def _param(**kw) -> str:
    return ";".join(f"{k}={_fmt(v)}" for k, v in kw.items())


def format_csv(rows, config_lines=()) -> str:
    buf = io.StringIO()
    for line in config_lines:
        buf.write(f"# {line}\n")
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(r.cells())
    return buf.getvalue()


def emit_csv(rows, path, config_lines=()) -> None:
    """Write rows (after the ``#`` config comments) as UTF-8 with LF endings."""
    text = format_csv(rows, config_lines)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def read_csv(source) -> list[ResultRow]:
    """Parse a result file (path or text); comment lines are skipped."""
    if isinstance(source, (str, os.PathLike)) and "\n" not in str(source):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = str(source)
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader, None)
    if tuple(header or ()) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header}")
    out = []
    for c in reader:
        out.append(ResultRow(c[0], int(c[1]), int(c[2]), c[3], int(c[4]), c[5], float(c[6]),
                             int(c[7])))
    return out


# --------------------------------------------------------------------------
# randomness and workers


def trial_rng(seed: int, *keys: int) -> np.random.Generator:
    """Independent generator for ``(seed, keys...)``."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


_WORKER_STATE: dict = {}


def _init_worker(state):
    _WORKER_STATE.clear()
    _WORKER_STATE.update(state)


def _chunks(n: int, size: int):
    return [range(i, min(n, i + size)) for i in range(0, n, size)]


def _parallel_map(fn, items, state, workers: int):
    """``[fn(item) for item in items]`` with ``state`` installed for ``fn``."""
    if workers <= 1 or len(items) <= 1:
        _init_worker(state)
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=workers, initializer=_init_worker,
                             initargs=(state,)) as ex:
        return list(ex.map(fn, items))


# --------------------------------------------------------------------------
# bound sweep


def run_bound_sweep(cfg: ExperimentConfig, seed: int = 0) -> list[ResultRow]:
    """MAP error bounds over the ``(q, p, L)`` grid and minimal ``L/N`` per ``delta``.

    When ``alphabet`` is smaller than ``q`` the source is lifted into the
    larger field; zero-mass field values do not change the partition sums,
    so only ``q`` changes.  ``seed`` is accepted for interface uniformity.
    """
    v = cfg.values
    N = v["N"]
    rows = []
    for q in v["q"]:
        alpha = v["alphabet"] or q
        for p in v["p"]:
            f = chain_laplacian_model(N, p, alpha)
            eb = ErrorBound(f, q)
            par = _param(p=p, alphabet=alpha)
            for L in v["L"]:
                r = eb.upper_bound(L)
                rows.append(ResultRow("bound", N, q, par, L, "bound", r.bound, 0))
                rows.append(ResultRow("bound", N, q, par, L, "rho_star", r.rho_star, 0))
                rows.append(ResultRow("bound", N, q, par, L, "regime", REGIME_CODES[r.regime], 0))
            for d in v["delta"]:
                ms = eb.min_symbols(d)
                rows.append(ResultRow("bound", N, q, _param(p=p, alphabet=alpha, delta=d), ms.L_min,
                                      "min_l_over_n", ms.l_over_n, 0))
    return rows


# --------------------------------------------------------------------------
# sensor network


def _sensor_trials(trials):
    st = _WORKER_STATE
    Ls = st["L"]
    Lmax = max(Ls) if Ls else 0
    out = np.zeros((len(trials), len(st["models"]), len(st["fields"]), len(Ls)), dtype=bool)
    for ti, t in enumerate(trials):
        rng = trial_rng(st["seed"], _STREAM_TRIAL, t)
        z = rng.standard_normal(st["N"])
        mats = [random_coding_matrix(Lmax, st["N"], f, rng) for f in st["fields"]]
        for bi, (model, graph) in enumerate(zip(st["models"], st["graphs"])):
            x = quantize(model.chol @ z, model.n_bits, model.clip)
            for qi, (f, amap) in enumerate(zip(st["fields"], st["amaps"][bi])):
                xf = amap.to_field(x)
                lifted = st["priors"][bi][qi]
                for li, L in enumerate(Ls):
                    res = decode_bp(make_batch(mats[qi][:L], xf, f), graph, lifted,
                                    st["k_max"], amap=amap, use_prior=st["use_prior"])
                    out[ti, bi, qi, li] = not np.array_equal(res.x_hat_star, xf)
    return out


def run_sensor_experiment(cfg: ExperimentConfig, seed: int = 0) -> list[ResultRow]:
    """Sequence error rate of BP decoding for Gaussian sensor fields.

    Sensors sit at the same random positions for every ``beta``; trial
    ``t`` uses the same Gaussian draw and coding matrices for all ``beta``
    and the first ``L`` rows of one matrix for every ``L``.
    """
    v = cfg.values
    N, n_bits = v["N"], v["n_bits"]
    positions = trial_rng(seed, _STREAM_LAYOUT).random((N, 2))
    models, graphs, priors = [], [], []
    for beta in v["beta"]:
        m = gaussian_sensor_model(N, beta, positions=positions, n_bits=n_bits, clip=v["clip"])
        models.append(m)
        try:
            graphs.append(sensor_correlation_graph(m))
        except Exception as e:
            raise RuntimeError(f"correlation pmfs for beta={beta}: {e}") from e
        priors.append(np.stack([marginal_pmf_from_gaussian(m, i) for i in range(N)]))
    fields = [get_field(q) for q in v["q"]]
    amaps = [[AlphabetMap(m.alphabet, f) for f in fields] for m in models]
    lifted = []
    for pri, row in zip(priors, amaps):
        per_q = []
        for amap in row:
            t = np.zeros((N, amap.field.q))
            t[:, list(amap.forward)] = pri
            per_q.append(t)
        lifted.append(per_q)
    state = dict(seed=seed, N=N, L=list(v["L"]), k_max=v["k_max"], use_prior=v["use_prior"],
                 models=models, graphs=graphs, priors=lifted, fields=fields, amaps=amaps)
    n = v["n_samples"]
    workers = v["workers"]
    size = max(1, math.ceil(n / (4 * workers))) if workers > 1 else n
    parts = _parallel_map(_sensor_trials, _chunks(n, size), state, workers)
    errs = np.concatenate(parts, axis=0)  # (n, beta, q, L)
    rows = []
    for bi, beta in enumerate(v["beta"]):
        for qi, q in enumerate(v["q"]):
            for li, L in enumerate(v["L"]):
                rows.append(ResultRow("sensor", N, q, _param(beta=beta, n_bits=n_bits), L,
                                      "error_rate", float(errs[:, bi, qi, li].sum()) / n, n))
    return rows


# --------------------------------------------------------------------------
# images


def read_pgm(path) -> np.ndarray:
    """Binary (P5) 8-bit PGM as a ``uint8`` array of shape ``(rows, cols)``."""
    data = Path(path).read_bytes()
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ValueError(f"{path}: truncated PGM header")
        if data[pos:pos + 1] == b"#":
            while pos < len(data) and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM (magic {tokens[0]!r})")
    try:
        w, h, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise ValueError(f"{path}: malformed PGM header") from None
    if w <= 0 or h <= 0:
        raise ValueError(f"{path}: bad image size {w}x{h}")
    if maxval != 255:
        raise ValueError(f"{path}: only 8-bit PGM (maxval 255) is supported, got {maxval}")
    pos += 1  # single whitespace after maxval
    raster = data[pos:pos + w * h]
    if len(raster) != w * h:
        raise ValueError(f"{path}: expected {w * h} pixel bytes, found {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(h, w).copy()


def write_pgm(path, img) -> None:
    img = np.asarray(img)
    if img.ndim != 2 or img.dtype != np.uint8:
        raise ValueError("expected a 2-D uint8 image")
    h, w = img.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(img.tobytes())


def psnr_db(original, decoded, n_bits: int) -> float:
    """``10 log10((2^n - 1)^2 / MSE)``; identical images give :data:`PSNR_LOSSLESS`."""
    a = np.asarray(original, dtype=float)
    b = np.asarray(decoded, dtype=float)
    if a.shape != b.shape:
        raise ValueError("image shapes differ")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return PSNR_LOSSLESS
    return 10.0 * math.log10(((1 << n_bits) - 1) ** 2 / mse)


def fit_laplacian_p(w) -> float:
    """Maximum-likelihood parameter of ``(1-p)/(1+p) p^|w|`` for integer samples ``w``.

    Setting the score to zero gives ``m p^2 + 2 p - m = 0`` with ``m`` the
    mean absolute difference.  The result is clamped into ``[1e-6, 1 - 1e-6]``.
    """
    m = float(np.mean(np.abs(np.asarray(w, dtype=float))))
    if m == 0.0:
        return 1e-6
    p = (math.sqrt(1.0 + m * m) - 1.0) / m
    return min(max(p, 1e-6), 1.0 - 1e-6)


def _load_frames(cfg: ExperimentConfig) -> tuple[list[Path], np.ndarray]:
    d = Path(cfg["frames"])
    if not d.is_absolute():
        d = cfg.base_dir / d
    if not d.is_dir():
        raise ValueError(f"frames directory {d} does not exist")
    paths = sorted(p for p in d.iterdir() if p.suffix.lower() == ".pgm")
    N = cfg["N"] or len(paths)
    if len(paths) < N or N < 2:
        raise ValueError(f"need at least {max(N, 2)} PGM frames in {d}, found {len(paths)}")
    paths = paths[:N]
    frames = [read_pgm(p) for p in paths]
    if any(f.shape != frames[0].shape for f in frames):
        raise ValueError("frame sizes differ: " + ", ".join(f"{p.name} {f.shape}" for p, f in zip(paths, frames)))
    return paths, np.stack(frames)


def _image_decode(chunk):
    st = _WORKER_STATE
    f, amap = st["field"], st["amap"]
    out = np.empty((len(chunk), st["N"]), dtype=np.int64)
    for i, xf in enumerate(st["X"][chunk.start:chunk.stop]):
        res = decode_bp(make_batch(st["A"], xf, f), st["graph"], st["priors"], st["k_max"],
                        amap=amap, use_prior=st["use_prior"])
        out[i] = res.x_hat_star
    return out


def image_coding_matrix(seed: int, L: int, N: int, field) -> np.ndarray:
    """The shared coding matrix of an image run (its first ``L`` rows serve every ``L``)."""
    return random_coding_matrix(L, N, field, trial_rng(seed, _STREAM_IMAGE, 0))


def run_image_experiment(cfg: ExperimentConfig, seed: int = 0, decoded: dict | None = None
                         ) -> list[ResultRow]:
    """Decode every pixel position of an ``N``-frame sequence from ``L`` coded symbols.

    Pixels are quantised by dropping low-order bits.  With ``shared_matrix``
    (the default) one coding matrix serves every pixel, and its first ``L``
    rows are used for each ``L``; identical pixel sequences then decode
    identically and are decoded once.

    If ``decoded`` is a dict it receives, for each ``L``, the decoded
    quantised frames as an integer array ``(N, rows, cols)``.
    """
    v = cfg.values
    n_bits = v["n_bits"]
    _, frames = _load_frames(cfg)
    N = frames.shape[0]
    q = v["q"] or (1 << n_bits)
    f = get_field(q)
    levels = 1 << n_bits
    Xint = (frames >> (8 - n_bits)).reshape(N, -1).T.astype(np.int64)  # (pixels, N)
    amap = AlphabetMap(tuple(range(levels)), f)
    # priors: per-frame histograms of the quantised values
    priors = np.zeros((N, q))
    for n in range(N):
        priors[n, :levels] = np.bincount(Xint[:, n], minlength=levels) / Xint.shape[0]
    window = v["window"] or N
    graph = CorrelationGraph(N, alphabet=amap.alphabet)
    for i in range(N):
        for j in range(i + 1, min(N, i + window)):
            p = fit_laplacian_p(Xint[:, i] - Xint[:, j]) if v["laplace_p"] == "fit" else v["laplace_p"]
            graph.add_edge(i, j, laplacian_noise_pmf(p, support_radius=levels - 1))
    Ls = v["L"] if v["L"] is not None else list(range(max(0, N - 4), N + 1))
    Lmax = max(Ls)
    Xf = amap.to_field(Xint)
    shared = v["shared_matrix"]
    if shared:
        uniq, inverse = np.unique(Xf, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        A_full = image_coding_matrix(seed, Lmax, N, f)
    rows = []
    P = Xint.shape[0]
    workers = v["workers"]
    for L in Ls:
        if shared:
            state = dict(field=f, amap=amap, N=N, X=uniq, A=A_full[:L], graph=graph,
                         priors=priors, k_max=v["k_max"], use_prior=v["use_prior"])
            size = max(1, math.ceil(len(uniq) / (4 * workers))) if workers > 1 else len(uniq)
            dec = np.concatenate(_parallel_map(_image_decode, _chunks(len(uniq), size), state,
                                               workers))[inverse]
        else:
            dec = np.empty_like(Xf)
            for px in range(P):
                A = random_coding_matrix(L, N, f, trial_rng(seed, _STREAM_IMAGE, 1 + px))
                dec[px] = decode_bp(make_batch(A, Xf[px], f), graph, priors, v["k_max"],
                                    amap=amap, use_prior=v["use_prior"]).x_hat_star
        dec_int = amap.from_field(dec)
        if decoded is not None:
            decoded[L] = dec_int.T.reshape(frames.shape)
        err = np.any(dec_int != Xint, axis=1)
        rows.append(ResultRow("images", N, q, _param(n_bits=n_bits), L, "error_rate",
                              float(err.sum()) / P, P))
        for n in range(N):
            rows.append(ResultRow("images", N, q, _param(n_bits=n_bits, frame=n), L, "psnr_db",
                                  psnr_db(Xint[:, n], dec_int[:, n], n_bits), P))
    return rows


# --------------------------------------------------------------------------


_RUNNERS = {"bound": run_bound_sweep, "sensor": run_sensor_experiment, "images": run_image_experiment}


def run_experiment(cfg: ExperimentConfig, seed: int = 0) -> list[ResultRow]:
    return _RUNNERS[cfg.experiment](cfg, seed)
