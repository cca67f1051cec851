"""Command-line interface.

Subcommands: ``truth-solve``, ``train``, ``query``, ``study``, ``model-info``.

Exit codes: 0 success, 2 usage (bad flags, parameter outside the domain),
3 numerical or training failure, 4 archive integrity (checksum, structure,
format version).

``--flags-from FILE`` splices the lines of FILE into the command line, one
argument per line, verbatim.
"""
import argparse
import csv
import json
import logging
import os
import sys
import time

import numpy as np

from . import archive, studies
from .exceptions import ArchiveError, DomainError, RedCollocError
from .greedy import GreedyHistory, train_ercm, train_ercm_burgers, train_lsrcm
from .precond import CLI_NAMES, build as build_precond
from .problem import build_problem, training_grid
from .reduced import NonlinearReducedModel, precompute, precompute_burgers, reconstruct, solve_online
from .reduced import solve_online_burgers
from .truth import h1_norm, l2_norm, solve_truth, solve_truth_burgers

logger = logging.getLogger("redcolloc")

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_ARCHIVE = 0, 2, 3, 4
DEFAULT_NX = {"diffusion2d": 41, "burgers1d": 65}
DEFAULT_TRAIN_GRID = {"diffusion2d": (32, 32), "burgers1d": (65,)}


class UsageError(Exception):
    pass


def _floats(text):
    try:
        return [float(v) for v in text.replace(" ", "").split(",") if v]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text):
    try:
        return tuple(int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _precond_list(text):
    kinds = [k for k in text.split(",") if k]
    bad = [k for k in kinds if k not in CLI_NAMES and k not in CLI_NAMES.values()]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown preconditioner(s) {bad}; choose from {sorted(CLI_NAMES)}")
    return kinds


def _expand_flags_from(argv):
    """Rewrite ``--flags-from FILE`` as argparse's ``@FILE`` (one argument per line)."""
    out, it = [], iter(argv)
    for tok in it:
        if tok == "--flags-from":
            path = next(it, None)
            if path is None:
                raise UsageError("--flags-from needs a file")
            out.append("@" + path)
        elif tok.startswith("--flags-from="):
            out.append("@" + tok.split("=", 1)[1])
        else:
            out.append(tok)
    return out


def build_parser():
    p = argparse.ArgumentParser(prog="redcolloc", fromfile_prefix_chars="@",
                                description="Reduced collocation methods for parametrized PDEs.")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="worker threads for parameter sweeps (default: all cores)")
    p.add_argument("--flags-from", metavar="FILE", help="read further arguments from FILE, one per line")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("truth-solve", help="full-order collocation solve at one parameter")
    t.add_argument("--problem", choices=sorted(DEFAULT_NX), default="diffusion2d")
    t.add_argument("--nx", type=int, help="Chebyshev points per direction")
    t.add_argument("--mu", type=_floats, required=True, help="parameter, e.g. 1,0.5")
    t.add_argument("--rhs", choices=("fixed", "manufactured"), default="fixed", help="Burgers forcing")
    t.add_argument("--out", default="-", help="CSV of node coordinates and values ('-' for stdout)")

    tr = sub.add_parser("train", help="greedy offline training; writes a model archive")
    tr.add_argument("--problem", choices=sorted(DEFAULT_NX), default="diffusion2d")
    tr.add_argument("--method", choices=("lsrcm", "ercm", "ercm-burgers"), default="ercm")
    tr.add_argument("--precond", choices=sorted(CLI_NAMES), default="none")
    tr.add_argument("--nx", type=int)
    tr.add_argument("--train-grid", type=_ints, help="training grid points per parameter, e.g. 32,32")
    tr.add_argument("--nmax", type=int, default=20)
    tr.add_argument("--tol", type=float, default=0.0, help="stop once the max estimate drops below this")
    tr.add_argument("--seed", type=int, help="seed for the first parameter (default: first grid point)")
    tr.add_argument("--inner-product", choices=("l2", "l2cc", "opweighted"), default="opweighted",
                    help="LSRCM orthonormalization product")
    tr.add_argument("--rhs", choices=("fixed", "manufactured"), default="fixed", help="Burgers forcing")
    tr.add_argument("--out-model", required=True)
    tr.add_argument("--history", help="history CSV (default: <out-model>.history.csv)")

    q = sub.add_parser("query", help="online reduced solves from a model archive")
    q.add_argument("--model", required=True)
    q.add_argument("--mu", type=_floats, action="append", default=[], help="repeatable")
    q.add_argument("--mu-file", help="one parameter per line, comma or whitespace separated")
    q.add_argument("--check-truth", action="store_true", help="add L2/H1 errors against a truth solve")
    q.add_argument("--out", default="-")

    s = sub.add_parser("study", help="stability, convergence or effectivity study")
    s.add_argument("--study", required=True, choices=studies.STUDIES)
    s.add_argument("--profile", choices=sorted(studies.PROFILES), default="desk")
    s.add_argument("--precond", type=_precond_list, default=["none", "center", "interp"])
    s.add_argument("--method", choices=("lsrcm", "ercm"), default="lsrcm")
    s.add_argument("--nx", type=int)
    s.add_argument("--nmax", type=int)
    s.add_argument("--samples", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--train-grid", type=_ints)
    s.add_argument("--param-grid", type=_ints)
    s.add_argument("--out-dir", default=".")

    m = sub.add_parser("model-info", help="print the manifest of a model archive")
    m.add_argument("--model", required=True)
    return p


def _open_out(path):
    return sys.stdout if path == "-" else open(path, "w", newline="")


def _write_rows(path, header, rows):
    fh = _open_out(path)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    finally:
        if fh is not sys.stdout:
            fh.close()


def _fmt(v):
    return f"{v:.17g}"


def cmd_truth_solve(args):
    nx = args.nx or DEFAULT_NX[args.problem]
    if args.problem == "burgers1d":
        problem = build_problem("burgers1d", nx, rhs_spec=args.rhs)
        sol = solve_truth_burgers(problem, args.mu)
        coords = problem.grid.points[:, None]
        values = np.concatenate([[0.0], sol.values, [0.0]])
        names = ["x"]
        fnorm = np.linalg.norm(problem.rhs(sol.mu))
    else:
        problem = build_problem("diffusion2d", nx)
        sol = solve_truth(problem, args.mu)
        coords = problem.grid.coordinates(interior=False)
        values = np.zeros(problem.grid.n_full)
        values[problem.grid.interior_index] = sol.values
        names = ["x", "y"]
        fnorm = np.linalg.norm(problem.rhs(sol.mu))
    _write_rows(args.out, names + ["value"], ([_fmt(c) for c in xy] + [_fmt(v)] for xy, v in zip(coords, values)))
    print(f"residual_norm {sol.residual_norm:.6e}  relative {sol.residual_norm / fnorm:.6e}", file=sys.stderr)
    return EXIT_OK


def _progress(t0, collected):
    def report(r):
        collected.rounds.append(r)
        print(f"round {r.index:3d}  mu={np.round(r.mu, 6).tolist()}  max_delta {r.max_delta:.3e}  "
              f"elapsed {time.perf_counter() - t0:.2f}s", file=sys.stderr)
    return report


def cmd_train(args):
    problem_name = "burgers1d" if args.method == "ercm-burgers" else args.problem
    if (problem_name == "burgers1d") != (args.method == "ercm-burgers"):
        raise UsageError("burgers1d trains with --method ercm-burgers only")
    nx = args.nx or DEFAULT_NX[problem_name]
    options = {"rhs_spec": args.rhs} if problem_name == "burgers1d" else {}
    problem = build_problem(problem_name, nx, **options)
    counts = args.train_grid or DEFAULT_TRAIN_GRID[problem_name]
    Xi = training_grid(problem.domain, counts)
    history_path = args.history or args.out_model + ".history.csv"
    collected = GreedyHistory()
    progress = _progress(time.perf_counter(), collected)
    try:
        if problem_name == "burgers1d":
            basis, history = train_ercm_burgers(problem, Xi, n_max=args.nmax, stop_tol=args.tol,
                                                seed=args.seed, progress=progress)
            model = precompute_burgers(basis, problem)
        else:
            data = build_precond(args.precond, problem)
            if args.method == "lsrcm":
                basis, history = train_lsrcm(problem, Xi, data, n_max=args.nmax, stop_tol=args.tol,
                                             seed=args.seed, inner_product=args.inner_product,
                                             progress=progress)
            else:
                basis, history = train_ercm(problem, Xi, data, n_max=args.nmax, stop_tol=args.tol,
                                            seed=args.seed, progress=progress)
            model = precompute(basis, problem, data)
    except RedCollocError:
        if collected.rounds:
            collected.write_csv(history_path)
            print(f"partial history written to {history_path}", file=sys.stderr)
        raise
    history.write_csv(history_path)
    archive.save_model(model, args.out_model, options)
    print(f"trained {model.method} N={model.N} ({history.stop_reason}); model {args.out_model}, "
          f"history {history_path}", file=sys.stderr)
    return EXIT_OK


def _read_mu_file(path):
    rows = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line and not line.startswith("#"):
                rows.append([float(v) for v in line.replace(",", " ").split()])
    return rows


def cmd_query(args):
    model = archive.load_model(args.model)
    manifest = archive.read_manifest(args.model)
    mus = list(args.mu) + (_read_mu_file(args.mu_file) if args.mu_file else [])
    if not mus:
        raise UsageError("query needs --mu or --mu-file")
    mus = [model.domain.check(mu) for mu in mus]
    problem = None
    if args.check_truth:
        problem = build_problem(model.problem_name, model.nx, **manifest.get("problem_options", {}))
    d = model.domain.dim
    header = [f"mu_{k + 1}" for k in range(d)] + ["N", "coeff_crc64", "delta", "flagged", "wall_time_s"]
    if args.check_truth:
        header += ["l2_error", "h1_error"]
    rows, warm = [], {}
    for mu in mus:
        if isinstance(model, NonlinearReducedModel):
            sol = solve_online_burgers(model, mu, warm_start=warm)
        else:
            sol = solve_online(model, mu)
        digest = f"{archive.crc64(np.ascontiguousarray(sol.coeffs, dtype='<f8').tobytes()):016x}"
        row = [_fmt(v) for v in mu] + [model.N, digest, _fmt(sol.delta), int(sol.flagged), f"{sol.wall_time:.3e}"]
        if problem is not None:
            truth = solve_truth_burgers(problem, mu) if isinstance(model, NonlinearReducedModel) \
                else solve_truth(problem, mu)
            err = reconstruct(model, sol.coeffs) - truth.values
            row += [_fmt(l2_norm(err, problem.grid)), _fmt(h1_norm(err, problem.grid))]
        rows.append(row)
    _write_rows(args.out, header, rows)
    return EXIT_OK


def cmd_study(args):
    overrides = dict(nx=args.nx, n_max=args.nmax, sample_count=args.samples, seed=args.seed,
                     train_counts=args.train_grid, param_counts=args.param_grid)
    cfg = studies.resolve_config(args.profile, preconds=tuple(args.precond), method=args.method,
                                 out_dir=args.out_dir, threads=args.threads, **overrides)
    for path in studies.run_study(args.study, cfg):
        print(path)
    return EXIT_OK


def cmd_model_info(args):
    manifest = archive.read_manifest(args.model)
    archive.load_model(args.model)  # verifies every section checksum
    print(json.dumps(manifest, indent=2, sort_keys=True))
    return EXIT_OK


COMMANDS = {"truth-solve": cmd_truth_solve, "train": cmd_train, "query": cmd_query,
            "study": cmd_study, "model-info": cmd_model_info}


def main(argv=None):
    """Entry point; returns the process exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    try:
        args = parser.parse_args(_expand_flags_from(argv))
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"redcolloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ArchiveError as exc:
        print(f"redcolloc: archive error: {exc}", file=sys.stderr)
        return EXIT_ARCHIVE
    except (UsageError, DomainError) as exc:
        parser.print_usage(sys.stderr)
        print(f"redcolloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except RedCollocError as exc:
        print(f"redcolloc: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, OSError) as exc:
        print(f"redcolloc: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def run():
    sys.exit(main())


if __name__ == "__main__":
    run()
