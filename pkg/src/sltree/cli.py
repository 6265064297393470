"""Command-line entry point: ``sltree {spectrum,charfn,approx,verify,oracle}``.

Exit status: 0 when the verdict passes, 2 when it fails, 1 on errors.
"""

from __future__ import annotations

import argparse
import json
import sys
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path

from .diophantine import DEFAULT_BUDGET, simultaneous_approx, tree_alphas
from .harness import (
    ambarzumyan_experiment,
    charfn_samples,
    fd_eigenvalues,
    first_eigenvalues,
    oracle_tolerance,
    spectrum_csv,
)
from .potentials import load_problem
from .spectrum import default_window, scan_spectrum

EXIT_PASS, EXIT_ERROR, EXIT_FAIL = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # usage errors share exit status 1 with other errors; 2 means "verdict failed"
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_window(text: str) -> tuple[float, float]:
    try:
        lo, hi = (float(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"window must look like lo:hi, got {text!r}") from None
    if not lo < hi:
        raise argparse.ArgumentTypeError("window needs lo < hi")
    return lo, hi


def parse_alphas(text: str) -> list:
    out = []
    for tok in text.split(","):
        tok = tok.strip()
        try:
            out.append(Fraction(tok) if "/" in tok or tok.isdigit() else float(tok))
        except (ValueError, ZeroDivisionError):
            raise argparse.ArgumentTypeError(f"bad alpha {tok!r}") from None
    return out


@contextmanager
def _output(path):
    if path in (None, "-"):
        yield sys.stdout
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            yield fh


def cmd_spectrum(args) -> int:
    tree, Q = load_problem(args.tree)
    window = args.window or default_window(tree, Q)
    spec = scan_spectrum(tree, Q, window, step=args.step, dirichlet_leaf=args.dirichlet_leaf, method=args.method)
    with _output(args.out) as fh:
        spectrum_csv(spec, fh)
    return EXIT_PASS


def cmd_charfn(args) -> int:
    tree, Q = load_problem(args.tree)
    window = args.window or (0.0, default_window(tree, Q)[1])
    with _output(args.out) as fh:
        charfn_samples(tree, Q, window, args.count, fh, dirichlet_leaf=args.dirichlet_leaf)
    return EXIT_PASS


def cmd_approx(args) -> int:
    if args.alphas is not None:
        alphas = args.alphas
    elif args.tree is not None:
        tree, _ = load_problem(args.tree)
        alphas = tree_alphas(tree)
    else:
        raise UsageError("approx needs --tree or --alphas")
    r = simultaneous_approx(alphas, args.n, budget=args.budget)
    lines = [
        f"n = {r.n}",
        f"m = {r.m}",
        "k = " + " ".join(map(str, r.k)),
        "errors = " + " ".join(f"{e:.6g}" for e in r.errors),
        f"bound = {r.bound:.6g}",
        f"sum k = {sum(r.k)}",
        f"rational shortcut = {r.rational}",
    ]
    ok = r.satisfies_bound() and (r.n < len(r.k) or sum(r.k) == r.m)
    lines.append(f"verdict: {'bound satisfied' if ok else 'bound violated'}")
    with _output(args.out) as fh:
        fh.write("\n".join(lines) + "\n")
    return EXIT_PASS if ok else EXIT_FAIL


def cmd_verify(args) -> int:
    tree, Q = load_problem(args.tree)
    report = ambarzumyan_experiment(tree, Q, args.n)
    with _output(args.out) as fh:
        if args.json:
            json.dump(report.as_dict(), fh, indent=2)
            fh.write("\n")
        else:
            fh.write(report.to_text())
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_oracle(args) -> int:
    tree, Q = load_problem(args.tree)
    scan = first_eigenvalues(tree, Q, args.count)
    fd = fd_eigenvalues(tree, Q, args.h, args.count).flat()
    ok = True
    with _output(args.out) as fh:
        fh.write("n,scan,fd,difference,tolerance\n")
        for i, (a, b) in enumerate(zip(scan, fd), 1):
            tol = oracle_tolerance(a, args.h)
            ok &= bool(abs(a - b) <= tol)
            fh.write(f"{i},{a:.15g},{b:.15g},{abs(a - b):.15g},{tol:.15g}\n")
    print(f"verdict: {'agree' if ok else 'disagree'}", file=sys.stderr)
    return EXIT_PASS if ok else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="sltree", description="Spectra of Sturm-Liouville operators on metric trees.")
    ap.add_argument("--config", help="JSON file with option defaults (keys are option names)")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, tree_required=True):
        p.add_argument("--tree", required=tree_required, help="tree/potential file (line format or JSON)")
        p.add_argument("--out", help="output file (default stdout)")

    p = sub.add_parser("spectrum", help="eigenvalues in a window as lambda,multiplicity CSV")
    common(p)
    p.add_argument("--window", type=parse_window, help="lo:hi (default covers about 20 modes)")
    p.add_argument("--step", type=float, help="lambda scan step")
    p.add_argument("--dirichlet-leaf", type=int, help="pendant vertex with a Dirichlet condition")
    p.add_argument("--method", choices=("recursion", "determinant", "psi"), default="recursion")
    p.set_defaults(func=cmd_spectrum)

    p = sub.add_parser("charfn", help="sample phi_N, phi_D, psi_N, psi_D as CSV")
    common(p)
    p.add_argument("--window", type=parse_window)
    p.add_argument("--count", type=int, default=101)
    p.add_argument("--dirichlet-leaf", type=int)
    p.set_defaults(func=cmd_charfn)

    p = sub.add_parser("approx", help="simultaneous approximation of the length ratios")
    common(p, tree_required=False)
    p.add_argument("--alphas", type=parse_alphas, help="comma-separated ratios instead of a tree")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--budget", type=int, default=DEFAULT_BUDGET)
    p.set_defaults(func=cmd_approx)

    p = sub.add_parser("verify", help="compare sigma(Q) with sigma(0)")
    common(p)
    p.add_argument("--n", type=int, default=10, help="number of eigenvalues to compare")
    p.add_argument("--json", action="store_true", help="machine-readable report")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("oracle", help="compare the scan against the finite-element oracle")
    common(p)
    p.add_argument("--count", type=int, default=5)
    p.add_argument("--h", type=float, default=1e-3, help="mesh width")
    p.set_defaults(func=cmd_oracle)
    return ap


def _apply_config(ap: argparse.ArgumentParser, argv):
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if not known.config:
        return
    cfg = json.loads(Path(known.config).read_text(encoding="utf-8"))
    if not isinstance(cfg, dict):
        raise UsageError("config must be a JSON object")
    cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
    if isinstance(cfg.get("window"), str):
        cfg["window"] = parse_window(cfg["window"])
    elif isinstance(cfg.get("window"), list):
        cfg["window"] = tuple(map(float, cfg["window"]))
    if isinstance(cfg.get("alphas"), str):
        cfg["alphas"] = parse_alphas(cfg["alphas"])
    for action in ap._subparsers._group_actions:
        for sp in action.choices.values():
            known_dests = {a.dest for a in sp._actions}
            sp.set_defaults(**{k: v for k, v in cfg.items() if k in known_dests})
            # a value from the config satisfies --tree
            for a in sp._actions:
                if a.dest in cfg:
                    a.required = False


def _glue_negative_values(argv):
    # argparse reads "--window -1:25" as two options; pass it as "--window=-1:25"
    out, i = [], 0
    while i < len(argv):
        tok = argv[i]
        if tok in _VALUE_OPTIONS and i + 1 < len(argv) and argv[i + 1].startswith("-") and argv[i + 1][1:2].isdigit():
            out.append(f"{tok}={argv[i + 1]}")
            i += 2
            continue
        out.append(tok)
        i += 1
    return out


_VALUE_OPTIONS = {"--window", "--alphas"}


def main(argv=None) -> int:
    argv = _glue_negative_values(list(sys.argv[1:] if argv is None else argv))
    ap = build_parser()
    try:
        _apply_config(ap, argv)
        args = ap.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_ERROR
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except Exception as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
