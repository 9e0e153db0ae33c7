"""Command-line front end.

Exit codes: 0 success; 1 malformed input, unreadable model or unwritable
output; 2 too few points, rank deficiency or dimension mismatch; 3 fit
finished without converging (the model is still written and usable).
"""
import argparse
import csv
import sys
import warnings

import numpy as np

from .errors import (DimensionMismatch, InsufficientData, MalformedDocument, RankDeficient,
                     VersionMismatch)
from .pipeline import (DemoSpec, NonConvergenceWarning, anomaly_scores, fit, generate_demo,
                       load_model, save_model, transform)
from .rotation import DescentConfig

DEFAULT_SEED = 42
LABEL_COLUMN = "is_anomaly"
EXIT_OK, EXIT_INPUT, EXIT_DATA, EXIT_NONCONVERGED = 0, 1, 2, 3


class InputError(Exception):
    pass


def _is_number(cell):
    try:
        float(cell)
    except ValueError:
        return False
    return True


def read_csv(path, columns=None):
    """Read a numeric CSV; returns ``(header, array)``.

    A first row with any non-numeric cell is taken as the header.  A column
    named ``is_anomaly`` is a label and is dropped.  `columns` selects
    columns by header name or 0-based index.
    """
    try:
        with open(path, newline="") as fh:
            rows = [row for row in csv.reader(fh) if row]
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc.strerror}") from exc
    header = None
    if rows and not all(_is_number(c) for c in rows[0]):
        header, rows = [c.strip() for c in rows[0]], rows[1:]
    width = len(header) if header is not None else (len(rows[0]) if rows else 0)
    values = np.empty((len(rows), width))
    first_line = 2 if header is not None else 1
    for r, row in enumerate(rows):
        line = r + first_line
        if len(row) != width:
            raise InputError(f"{path}: row {line} has {len(row)} columns, expected {width}")
        for c, cell in enumerate(row):
            try:
                values[r, c] = float(cell)
            except ValueError:
                raise InputError(
                    f"{path}: non-numeric value {cell!r} at row {line}, column {c + 1}") from None
            if not np.isfinite(values[r, c]):
                raise InputError(f"{path}: non-finite value at row {line}, column {c + 1}")
    keep = list(range(width))
    if columns:
        keep = []
        for name in columns.split(","):
            name = name.strip()
            if header is not None and name in header:
                keep.append(header.index(name))
            elif name.isdigit() and int(name) < width:
                keep.append(int(name))
            else:
                raise InputError(f"{path}: no column {name!r}")
    elif header is not None and LABEL_COLUMN in header:
        keep.remove(header.index(LABEL_COLUMN))
    names = [header[k] for k in keep] if header is not None else None
    return names, values[:, keep]


def write_csv(path, header, rows, formats):
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(header)
            for row in rows:
                writer.writerow([fmt % v for fmt, v in zip(formats, row)])
    except OSError as exc:
        raise InputError(f"cannot write {path}: {exc.strerror}") from exc


def _load(path):
    try:
        return load_model(path)
    except OSError as exc:
        raise InputError(f"cannot read model {path}: {exc.strerror}") from exc
    except (MalformedDocument, VersionMismatch) as exc:
        raise InputError(f"invalid model {path}: {exc}") from exc


def _check_width(data, model):
    if data.shape[1] != model.n:
        raise DimensionMismatch(f"input has {data.shape[1]} columns, model expects {model.n}")


def cmd_fit(args):
    _, data = read_csv(args.input, args.columns)
    if data.shape[0] == 0:
        raise InsufficientData("input has no data rows")
    cfg = DescentConfig(step0=args.step, max_iters=args.max_iters,
                        tol_rel_norm=args.tol, seed=args.seed)

    def progress(iteration, norm_sq):
        if not args.quiet:
            print(f"iteration {iteration}: projected norm^2 {norm_sq:.6e}", file=sys.stderr)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NonConvergenceWarning)
        model = fit(data, cfg, progress=progress)
    try:
        save_model(model, args.model)
    except OSError as exc:
        raise InputError(f"cannot write model {args.model}: {exc.strerror}") from exc
    outcome = model.outcome
    print(f"N={model.n} M={model.m} iterations={outcome.iters} "
          f"residual_norm={model.residual_norm:.6e} status={outcome.status.value}")
    return EXIT_OK if outcome.converged else EXIT_NONCONVERGED


def cmd_transform(args):
    model = _load(args.model)
    _, data = read_csv(args.input, args.columns)
    _check_width(data, model)
    out = transform(model, data) if len(data) else np.empty((0, model.n))
    write_csv(args.output, [f"y{i + 1}" for i in range(model.n)], out, ["%.17g"] * model.n)
    return EXIT_OK


def cmd_score(args):
    model = _load(args.model)
    _, data = read_csv(args.input, args.columns)
    _check_width(data, model)
    scores = anomaly_scores(model, data) if len(data) else np.empty(0)
    order = np.argsort(-scores, kind="stable")
    if args.top is not None:
        order = order[:args.top]
    write_csv(args.output, ["row_index", "score"],
              ((i, scores[i]) for i in order), ["%d", "%.17g"])
    return EXIT_OK


def cmd_demo(args):
    spec = DemoSpec(n_points=args.points, n_anomalies=args.anomalies, seed=args.seed,
                    anomaly_offset=args.offset)
    points, anomalies = generate_demo(spec)
    label = np.zeros(len(points))
    label[anomalies] = 1
    write_csv(args.output, ["x", "y", LABEL_COLUMN], np.column_stack([points, label]),
              ["%.17g", "%.17g", "%d"])
    return EXIT_OK


def cmd_info(args):
    model = _load(args.model)
    print(f"version={model.version} N={model.n} M={model.m} "
          f"residual_norm={model.residual_norm:.6e}")
    return EXIT_OK


def _positive_int(text):
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def _positive_float(text):
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be > 0")
    return value


class _Parser(argparse.ArgumentParser):
    # usage errors are malformed input, not argparse's default exit 2
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser():
    parser = _Parser(
        prog="skewfree", description="Standardize multivariate data up to the third moment.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="fit a model on a CSV file")
    p.add_argument("--input", required=True)
    p.add_argument("--model", required=True, help="where to write the model document")
    p.add_argument("--columns", help="comma-separated column names or indices to use")
    p.add_argument("--tol", type=_positive_float, default=1e-6,
                   help="relative projected-norm tolerance (default 1e-6)")
    p.add_argument("--max-iters", type=_positive_int, default=5000)
    p.add_argument("--step", type=_positive_float, default=None,
                   help="initial step (default 0.1 / max(1, |Phi_0|))")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.add_argument("--quiet", action="store_true", help="no progress lines on stderr")
    p.set_defaults(func=cmd_fit)

    for name, func, text in (("transform", cmd_transform, "apply a model to a CSV file"),
                             ("score", cmd_score, "rank rows by anomaly score")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--input", required=True)
        p.add_argument("--model", required=True)
        p.add_argument("--output", required=True)
        p.add_argument("--columns", help="comma-separated column names or indices to use")
        if name == "score":
            p.add_argument("--top", type=_positive_int, default=None,
                           help="keep only the k highest scores")
        p.set_defaults(func=func)

    p = sub.add_parser("demo", help="write the triangle demo data set")
    p.add_argument("--output", required=True)
    p.add_argument("--points", type=_positive_int, default=10_000)
    p.add_argument("--anomalies", type=_positive_int, default=4)
    p.add_argument("--offset", type=_positive_float, default=DemoSpec.anomaly_offset,
                   help="distance of the anomalies above the diagonal")
    p.add_argument("--seed", type=int, default=DEFAULT_SEED)
    p.set_defaults(func=cmd_demo)

    p = sub.add_parser("info", help="summarize a model document")
    p.add_argument("--model", required=True)
    p.set_defaults(func=cmd_info)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InsufficientData, RankDeficient, DimensionMismatch) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (InputError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
