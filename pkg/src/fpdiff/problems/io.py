"""Plain-text instance files for persisting and replaying experiments.

Layout: a magic first line, a kind line, then typed records in any order,
closed by `end`.

    fpdiff-instance 1
    kind weighted_ridge
    scalar lam 0.1
    matrix design 2 3
    1.0 0.0 2.0
    0.5 -1.0 0.25
    vector targets 2
    1.0 -2.0
    end

Scalars are written with repr so round trips are bit exact.
"""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np

from .logistic import LogisticNewton
from .qp import QpInstance
from .quadratic import QuadraticInner
from .ridge import WeightedRidge

MAGIC = "fpdiff-instance 1"


def _write_scalar(out, name: str, value) -> None:
    out.write(f"scalar {name} {value!r}\n")


def _write_vector(out, name: str, vec: np.ndarray) -> None:
    out.write(f"vector {name} {vec.shape[0]}\n")
    out.write(" ".join(repr(float(v)) for v in vec) + "\n")


def _write_matrix(out, name: str, mat: np.ndarray) -> None:
    out.write(f"matrix {name} {mat.shape[0]} {mat.shape[1]}\n")
    for row in mat:
        out.write(" ".join(repr(float(v)) for v in row) + "\n")


def dumps_instance(prob) -> str:
    out = io.StringIO()
    out.write(MAGIC + "\n")
    if isinstance(prob, QuadraticInner):
        out.write("kind quadratic\n")
        _write_scalar(out, "step", prob.step)
        _write_scalar(out, "eig_min", prob.eig_min)
        _write_scalar(out, "eig_max", prob.eig_max)
        _write_matrix(out, "quad", prob.quad)
    elif isinstance(prob, WeightedRidge):
        out.write("kind weighted_ridge\n")
        _write_scalar(out, "lam", prob.lam)
        if prob.step is not None:
            _write_scalar(out, "step", prob.step)
        _write_matrix(out, "design", prob.design)
        _write_vector(out, "targets", prob.targets)
    elif isinstance(prob, LogisticNewton):
        out.write("kind logistic_newton\n")
        _write_scalar(out, "lam", prob.lam)
        _write_scalar(out, "ls_shrink", prob.ls_shrink)
        _write_scalar(out, "ls_slope", prob.ls_slope)
        _write_scalar(out, "ls_max_halvings", prob.ls_max_halvings)
        out.write(f"string loss {prob.loss}\n")
        _write_matrix(out, "design", prob.design)
        _write_vector(out, "labels", prob.labels)
    elif isinstance(prob, QpInstance):
        out.write("kind qp\n")
        _write_scalar(out, "sigma", prob.sigma)
        _write_scalar(out, "boundary", prob.boundary)
        _write_scalar(out, "stop_gap", prob.stop_gap)
        _write_scalar(out, "max_iter", prob.max_iter)
        _write_matrix(out, "quad", prob.quad)
        _write_vector(out, "lin", prob.lin)
        _write_matrix(out, "eq", prob.eq)
        _write_matrix(out, "ineq", prob.ineq)
        _write_vector(out, "ineq_rhs", prob.ineq_rhs)
    else:
        raise TypeError(f"cannot serialize {type(prob).__name__}")
    out.write("end\n")
    return out.getvalue()


def save_instance(path, prob) -> None:
    Path(path).write_text(dumps_instance(prob))


def _parse_records(lines: list[str]) -> dict:
    records: dict = {}
    idx = 0
    while idx < len(lines):
        line = lines[idx].strip()
        idx += 1
        if not line:
            continue
        if line == "end":
            return records
        parts = line.split()
        tag = parts[0]
        if tag == "kind":
            records["kind"] = parts[1]
        elif tag == "scalar":
            records[parts[1]] = float(parts[2])
        elif tag == "string":
            records[parts[1]] = parts[2]
        elif tag == "vector":
            name, size = parts[1], int(parts[2])
            values = np.array([float(v) for v in lines[idx].split()])
            if values.shape != (size,):
                raise ValueError(f"vector {name}: expected {size} entries")
            records[name] = values
            idx += 1
        elif tag == "matrix":
            name, rows, cols = parts[1], int(parts[2]), int(parts[3])
            block = []
            for r in range(rows):
                block.append([float(v) for v in lines[idx + r].split()])
            mat = np.array(block)
            if mat.shape != (rows, cols):
                raise ValueError(f"matrix {name}: expected shape {(rows, cols)}")
            records[name] = mat
            idx += rows
        else:
            raise ValueError(f"unknown record tag {tag!r}")
    raise ValueError("missing `end` terminator")


def loads_instance(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != MAGIC:
        raise ValueError(f"not an instance file (expected {MAGIC!r} header)")
    records = _parse_records(lines[1:])
    kind = records.pop("kind", None)
    if kind == "quadratic":
        return QuadraticInner(
            quad=records["quad"],
            step=records["step"],
            eig_min=records["eig_min"],
            eig_max=records["eig_max"],
        )
    if kind == "weighted_ridge":
        return WeightedRidge(
            design=records["design"],
            targets=records["targets"],
            lam=records["lam"],
            step=records.get("step"),
        )
    if kind == "logistic_newton":
        return LogisticNewton(
            design=records["design"],
            labels=records["labels"],
            lam=records["lam"],
            ls_shrink=records["ls_shrink"],
            ls_slope=records["ls_slope"],
            ls_max_halvings=int(records["ls_max_halvings"]),
            loss=records.get("loss", "logistic"),
        )
    if kind == "qp":
        return QpInstance(
            quad=records["quad"],
            lin=records["lin"],
            eq=records["eq"],
            ineq=records["ineq"],
            ineq_rhs=records["ineq_rhs"],
            sigma=records["sigma"],
            boundary=records["boundary"],
            stop_gap=records["stop_gap"],
            max_iter=int(records["max_iter"]),
        )
    raise ValueError(f"unknown instance kind {kind!r}")


def load_instance(path):
    return loads_instance(Path(path).read_text())
