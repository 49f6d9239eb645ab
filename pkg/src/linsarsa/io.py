"""Plain-text formats for MDPs, feature tables, reports and traces.

Floats are written with ``%.17g`` so a write/read round trip is exact.

MDP file::

    linsarsa-mdp 1
    n_states <S>
    n_actions <A>
    gamma <g>
    r_max <r>
    kernel            # S*A lines, row (x, a) holds P(0..S-1 | x, a)
    ...
    rewards           # S lines, row x holds r(x, 0..A-1)
    ...

Feature file::

    linsarsa-features 1
    shape <S> <A> <N>
    <S*A lines, row (x, a) holds phi(x, a)>

Blank lines and text after ``#`` are ignored.
"""
from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import ParameterError
from .features import FeatureMap
from .mdp import FiniteMdp

_FMT = "%.17g"


def _fmt_row(values) -> str:
    return " ".join(_FMT % v for v in values)


def _lines(text: str) -> list[list[str]]:
    out = []
    for raw in text.splitlines():
        line = raw.split("#", 1)[0].strip()
        if line:
            out.append(line.split())
    return out


def dumps_mdp(mdp: FiniteMdp) -> str:
    S, A = mdp.n_states, mdp.n_actions
    parts = ["linsarsa-mdp 1", f"n_states {S}", f"n_actions {A}",
             f"gamma {_FMT % mdp.gamma}", f"r_max {_FMT % mdp.r_max}", "kernel"]
    parts += [_fmt_row(mdp.kernel[x, a]) for x in range(S) for a in range(A)]
    parts.append("rewards")
    parts += [_fmt_row(mdp.rewards[x]) for x in range(S)]
    return "\n".join(parts) + "\n"


def loads_mdp(text: str) -> FiniteMdp:
    rows = _lines(text)
    try:
        if rows[0] != ["linsarsa-mdp", "1"]:
            raise ParameterError("not a linsarsa-mdp file")
        head = {r[0]: r[1] for r in rows[1:5]}
        S, A = int(head["n_states"]), int(head["n_actions"])
        gamma, r_max = float(head["gamma"]), float(head["r_max"])
        if rows[5] != ["kernel"] or rows[6 + S * A] != ["rewards"]:
            raise ParameterError("missing kernel or rewards section")
        kernel = np.array([[float(v) for v in r] for r in rows[6:6 + S * A]]).reshape(S, A, S)
        rewards = np.array([[float(v) for v in r] for r in rows[7 + S * A:7 + S * A + S]])
        if rewards.shape != (S, A):
            raise ParameterError("reward table has the wrong shape")
    except (IndexError, KeyError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed MDP file: {exc}") from exc
    return FiniteMdp(S, A, kernel, rewards, gamma, r_max)


def dumps_features(fm: FeatureMap) -> str:
    S, A, N = fm.table.shape
    parts = ["linsarsa-features 1", f"shape {S} {A} {N}"]
    parts += [_fmt_row(fm.table[x, a]) for x in range(S) for a in range(A)]
    return "\n".join(parts) + "\n"


def loads_features(text: str) -> FeatureMap:
    rows = _lines(text)
    try:
        if rows[0] != ["linsarsa-features", "1"] or rows[1][0] != "shape":
            raise ParameterError("not a linsarsa-features file")
        S, A, N = (int(v) for v in rows[1][1:4])
        table = np.array([[float(v) for v in r] for r in rows[2:2 + S * A]])
        table = table.reshape(S, A, N)
    except (IndexError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(f"malformed feature file: {exc}") from exc
    return FeatureMap(table)


def read_mdp(path) -> FiniteMdp:
    return loads_mdp(Path(path).read_text())


def write_mdp(mdp: FiniteMdp, path) -> None:
    Path(path).write_text(dumps_mdp(mdp))


def read_features(path) -> FeatureMap:
    return loads_features(Path(path).read_text())


def write_features(fm: FeatureMap, path) -> None:
    Path(path).write_text(dumps_features(fm))


def format_scalar(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return _FMT % float(v)
    if isinstance(v, (list, tuple, np.ndarray)):
        return " ".join(format_scalar(x) for x in np.ravel(np.asarray(v, dtype=object)))
    return str(v)


def format_report(fields: dict) -> str:
    """``key value`` lines, numbers at 17 significant digits."""
    return "".join(f"{k} {format_scalar(v)}\n" for k, v in fields.items())


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([format_scalar(v) for v in row])
    return buf.getvalue()


def write_csv(path, header, rows) -> None:
    Path(path).write_text(csv_text(header, rows))


def trace_rows(ts, thetas, grad_norms):
    """Rows ``t, theta_0..theta_{N-1}, grad_norm`` for a trace CSV."""
    thetas = np.asarray(thetas)
    header = ["t"] + [f"theta_{i}" for i in range(thetas.shape[1])] + ["grad_norm"]
    rows = [[int(t), *th, g] for t, th, g in zip(ts, thetas, grad_norms)]
    return header, rows
