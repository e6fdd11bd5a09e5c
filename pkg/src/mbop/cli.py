"""Batch command line: generate | identities | zeros | asymptotics.

Problem specifications are JSON documents::

    {
      "dim": 2,
      "mode": "biorthogonal",
      "coefficients": {"explicit": [[A0, B0, C0], ...], "tail": [A, B, C],
                       "head_length": 10},
      "points": [[3, 0], [0, 4]],
      "n_max": 10,
      "k_max": 3,
      "tolerances": {"LO_1": 1e-10}
    }

Matrix entries are numbers or ``[re, im]`` pairs.  With a tail and no
explicit head, ``head_length`` entries of seeded random perturbation are
drawn around the tail (``--seed``).  Optional keys: ``zeros`` (``{"n": [...],
"k": [...]}``), ``targets``, ``n_grid`` and ``k`` for the asymptotics command.

Exit codes: 0 success, 1 identity or convergence failure, 2 invalid input,
3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import asymptotics, identities, spectral
from .errors import InsideSpectrum, MBOPError, SpecError, UnboundedCoefficients
from .recurrence import RecurrenceCoefficients, generate_family, perturbed_coefficients
from .secondkind import StieltjesSource

EXIT_OK, EXIT_FAIL, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2, 3
MODES = ("biorthogonal", "orthonormal", "general")


# ---------------------------------------------------------------------------
# problem specification


def _complex(v, where):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, (list, tuple)) and len(v) == 2 and all(
            isinstance(t, (int, float)) and not isinstance(t, bool) for t in v):
        return complex(v[0], v[1])
    raise SpecError(where, f"expected a number or [re, im] pair, got {v!r}")


def _matrix(obj, dim, where):
    if not isinstance(obj, list) or len(obj) != dim:
        raise SpecError(where, f"expected {dim} rows")
    rows = []
    for i, row in enumerate(obj):
        if not isinstance(row, list) or len(row) != dim:
            raise SpecError(f"{where}[{i}]", f"expected {dim} entries")
        rows.append([_complex(v, f"{where}[{i}][{j}]") for j, v in enumerate(row)])
    return np.array(rows, dtype=complex)


def _triple(obj, dim, where):
    if not isinstance(obj, list) or len(obj) != 3:
        raise SpecError(where, "expected an [A, B, C] triple")
    return tuple(_matrix(m, dim, f"{where}[{i}]") for i, m in enumerate(obj))


def _int(d, key, default=None, minimum=0):
    v = d.get(key, default)
    if v is None:
        raise SpecError(key, "missing")
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise SpecError(key, f"expected an integer >= {minimum}")
    return v


@dataclass
class ProblemSpec:
    dim: int
    mode: str
    rc: RecurrenceCoefficients
    points: list
    n_max: int
    k_max: int
    tolerances: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)
    # coefficients seen by the identity checkers when they differ from the
    # generating ones (fault injection in tests)
    check_rc: RecurrenceCoefficients | None = None

    @classmethod
    def from_dict(cls, d, seed=0):
        if not isinstance(d, dict):
            raise SpecError("spec", "top level must be an object")
        dim = _int(d, "dim", minimum=1)
        mode = d.get("mode", "biorthogonal")
        if mode not in MODES:
            raise SpecError("mode", f"expected one of {', '.join(MODES)}")
        coeffs = d.get("coefficients")
        if not isinstance(coeffs, dict):
            raise SpecError("coefficients", "missing")
        explicit = coeffs.get("explicit", [])
        if not isinstance(explicit, list):
            raise SpecError("coefficients.explicit", "expected a list of triples")
        heads = [_triple(t, dim, f"coefficients.explicit[{i}]") for i, t in enumerate(explicit)]
        tail = coeffs.get("tail")
        if tail is not None:
            tail = _triple(tail, dim, "coefficients.tail")
        if not heads and tail is None:
            raise SpecError("coefficients", "need explicit triples or a tail")
        if heads and tail is None and "head_length" in coeffs:
            raise SpecError("coefficients.head_length", "only meaningful with a tail")
        if tail is not None and not heads and coeffs.get("head_length", 0):
            length = _int(coeffs, "head_length")
            rc = perturbed_coefficients(*tail, head=length, seed=seed, mode=mode)
            rc.validate()
        else:
            rc = RecurrenceCoefficients([h[0] for h in heads], [h[1] for h in heads],
                                        [h[2] for h in heads], tail=tail, dim=dim, mode=mode)
        points_raw = d.get("points", [])
        if not isinstance(points_raw, list):
            raise SpecError("points", "expected a list")
        points = [_complex(p, f"points[{i}]") for i, p in enumerate(points_raw)]
        n_max = _int(d, "n_max", 10)
        k_max = _int(d, "k_max", min(n_max, 3))
        tols = d.get("tolerances", {})
        if not isinstance(tols, dict):
            raise SpecError("tolerances", "expected an object")
        for key, v in tols.items():
            if key not in identities.IDENTITY_IDS:
                raise SpecError(f"tolerances.{key}", "unknown identity id")
            if not isinstance(v, (int, float)) or v <= 0:
                raise SpecError(f"tolerances.{key}", "expected a positive number")
        return cls(dim, mode, rc, points, n_max, k_max, dict(tols), d)

    @classmethod
    def load(cls, path, seed=0):
        try:
            with open(path, encoding="utf-8") as fh:
                d = json.load(fh)
        except OSError as exc:
            raise SpecError("--spec", str(exc)) from exc
        except json.JSONDecodeError as exc:
            raise SpecError("--spec", f"invalid JSON: {exc}") from exc
        return cls.from_dict(d, seed=seed)

    def require_points(self):
        if not self.points:
            raise SpecError("points", "at least one point is required")

    def require_tail(self):
        if not self.rc.has_tail:
            raise SpecError("coefficients.tail", "this command needs a constant tail")


# ---------------------------------------------------------------------------
# output


def _pair(z):
    return [float(np.real(z)), float(np.imag(z))]


def _matrix_json(m):
    return [[_pair(v) for v in row] for row in np.asarray(m)]


def write_atomic(path, text):
    """Write via a temporary file in the target directory, then rename."""
    directory = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".mbop-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _threads():
    try:
        return max(1, int(os.environ.get("MBOP_THREADS", "1")))
    except ValueError:
        return 1


def _pmap(fn, items):
    items = list(items)
    n = min(_threads(), max(1, len(items)))
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def _guard_points(spec, force):
    if force:
        return
    M = spectral.gershgorin_bound(spec.rc)
    for z in spec.points:
        if abs(z) <= M:
            raise InsideSpectrum(f"point {z} lies inside the disk |z| <= {M:.6g}; "
                                 "use --force-inside-spectrum to override")


# ---------------------------------------------------------------------------
# commands


def _family_json(table):
    return [[_matrix_json(c) for c in p.coeffs] for p in table.polys]


def cmd_generate(spec, out_path, args=None):
    fams = []
    for k in range(spec.k_max + 1):
        for kind in ("V", "G"):
            table = generate_family(spec.rc, kind, k, n_max=spec.n_max)
            fams.append({"kind": kind, "k": k, "polys": _family_json(table)})
    doc = {"dim": spec.dim, "mode": spec.mode, "n_max": spec.n_max,
           "k_max": spec.k_max, "families": fams}
    write_atomic(out_path, json.dumps(doc))
    return EXIT_OK


def cmd_identities(spec, out_path, args=None):
    spec.require_points()
    spec.require_tail()
    force = bool(args and args.force_inside_spectrum)
    _guard_points(spec, force)
    src = StieltjesSource.nevai_tail(spec.rc)
    tol = dict(spec.tolerances)
    if args is not None and args.tol is not None:
        tol = {i: args.tol for i in identities.IDENTITY_IDS}
    k_max = min(spec.k_max, spec.n_max)
    # the two-point identities pair every point with every other, so the
    # battery runs once; per-point parallelism would drop those pairs
    ws = identities.Workspace(spec.rc, src, spec.n_max, k_max)
    reports = identities.battery(spec.check_rc or spec.rc, src, spec.points, spec.n_max,
                                 k_max, tol=tol or None, ws=ws)
    write_atomic(out_path, json.dumps([r.to_dict() for r in reports], indent=1))
    failed = [r for r in reports if not r.passed and not r.informational]
    for r in failed[:20]:
        print(f"FAIL {r.identity_id} n={r.n} k={r.k} x={r.x} relative={r.relative:.3e}",
              file=sys.stderr)
    return EXIT_FAIL if failed else EXIT_OK


def cmd_zeros(spec, out_path, args=None):
    zs = spec.raw.get("zeros", {})
    if not isinstance(zs, dict):
        raise SpecError("zeros", "expected an object")
    ns = zs.get("n", [spec.n_max])
    ks = zs.get("k", [0])
    for key, vals in (("zeros.n", ns), ("zeros.k", ks)):
        if not isinstance(vals, list) or not vals or not all(
                isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in vals):
            raise SpecError(key, "expected a non-empty list of integers >= 0")
    if any(n < 1 for n in ns):
        raise SpecError("zeros.n", "degrees must be >= 1")
    try:
        M = spectral.gershgorin_bound(spec.rc)
    except UnboundedCoefficients:
        M = None
    jobs = [(k, n) for k in ks for n in ns]

    def one(job):
        k, n = job
        zv = spectral.zeros(spec.rc, k, n)
        matched, worst = spectral.pair_zero_sets(zv, spectral.g_zeros(spec.rc, k, n))
        return zv, matched, worst

    results = _pmap(one, jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "n", "re", "im"])
    ok = True
    for zv, matched, worst in results:
        for row in zv.rows():
            w.writerow([row[0], row[1], repr(row[2]), repr(row[3])])
        if not matched:
            ok = False
            print(f"FAIL V/G zero pairing k={zv.k} n={zv.n} worst={worst:.3e}", file=sys.stderr)
        if M is not None and any(abs(z) > M + 1e-9 for z in zv.zeros):
            ok = False
            print(f"FAIL zero outside |z| <= {M:.6g} at k={zv.k} n={zv.n}", file=sys.stderr)
    write_atomic(out_path, buf.getvalue())
    return EXIT_OK if ok else EXIT_FAIL


def _default_targets(spec):
    names = ["RATIO_V", "RATIO_G", "RATIO_Q", "RATIO_R", "PRODUCT_RV", "PRODUCT_GQ"]
    if spec.dim == 1:
        names = ["SCALAR_P_RATIO", "SCALAR_Q_RATIO", "SCALAR_PQ_PRODUCT"] + names
    return names


def cmd_asymptotics(spec, out_path, args=None):
    spec.require_points()
    spec.require_tail()
    force = bool(args and args.force_inside_spectrum)
    targets = spec.raw.get("targets", _default_targets(spec))
    if not isinstance(targets, list) or not targets:
        raise SpecError("targets", "expected a non-empty list")
    for i, t in enumerate(targets):
        if t not in asymptotics.Target.__members__:
            raise SpecError(f"targets[{i}]", f"unknown target {t!r}")
    grid = spec.raw.get("n_grid", list(asymptotics.DEFAULT_GRID))
    if not isinstance(grid, list) or not grid or not all(
            isinstance(v, int) and not isinstance(v, bool) and v >= 0 for v in grid):
        raise SpecError("n_grid", "expected a non-empty list of integers >= 0")
    k = spec.raw.get("k", 1)
    if not isinstance(k, int) or k < 1:
        raise SpecError("k", "expected an integer >= 1")
    src = StieltjesSource.nevai_tail(spec.rc)
    jobs = [(t, z) for z in spec.points for t in targets]
    studies = _pmap(lambda j: asymptotics.run_study(spec.rc, src, j[0], j[1], grid,
                                                    k=k, force=force), jobs)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["target", "x_re", "x_im", "n", "error"])
    for s in studies:
        for n, e in zip(s.n_grid, s.errors):
            w.writerow([s.target_id.value, repr(s.x.real), repr(s.x.imag), n, repr(e)])
    write_atomic(out_path, buf.getvalue())
    summary_path = os.path.splitext(out_path)[0] + ".json"
    write_atomic(summary_path, json.dumps([s.summary() for s in studies], indent=1))
    bad = [s for s in studies if not s.converged]
    for s in bad:
        print(f"FAIL {s.target_id.value} x={s.x} errors={s.errors}", file=sys.stderr)
    return EXIT_FAIL if bad else EXIT_OK


COMMANDS = {
    "generate": cmd_generate,
    "identities": cmd_identities,
    "zeros": cmd_zeros,
    "asymptotics": cmd_asymptotics,
}


def build_parser():
    p = argparse.ArgumentParser(prog="mbop", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        c = sub.add_parser(name)
        c.add_argument("--spec", required=True, help="problem specification (JSON)")
        c.add_argument("--out", required=True, help="output file")
        c.add_argument("--seed", type=int, default=0, help="seed for random head entries")
        c.add_argument("--force-inside-spectrum", action="store_true",
                       help="allow evaluation points inside the Gershgorin disk")
        c.add_argument("--tol", type=float, default=None,
                       help="override every identity tolerance")
    return p


def main(argv=None, post_validate=None):
    """Entry point.

    ``post_validate`` (tests only) maps the validated coefficients to the set
    the identity checkers read, while families are still generated from the
    validated set; a corrupted coefficient then shows up as failing identities.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code else EXIT_OK
    if args.seed < 0 or args.seed >= 2 ** 64:
        print("error: --seed must be an unsigned 64-bit integer", file=sys.stderr)
        return EXIT_INPUT
    if args.tol is not None and not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        spec = ProblemSpec.load(args.spec, seed=args.seed)
        if post_validate is not None:
            spec.check_rc = post_validate(spec.rc)
        return COMMANDS[args.command](spec, args.out, args)
    except SpecError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except InsideSpectrum as exc:
        print(f"error: InsideSpectrum: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (MBOPError, np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
