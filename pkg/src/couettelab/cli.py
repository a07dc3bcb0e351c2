"""Command-line surface.

Exit codes: 0 success, 2 configuration/usage error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import dns, experiments, norms, verify
from .config import ConfigError, load_sim_config, load_threshold_query
from .records import TrajectoryRecord, dump_json

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="couettelab",
        description="Shear-flow perturbation laboratory: simulation, "
        "linear-estimate verification, and threshold experiments.",
    )
    p.add_argument("--output", choices=("csv", "json"), default="csv",
                   help="record output format for run commands")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1,
                   help="worker processes for independent runs")
    sub = p.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="integrate the full perturbation system")
    sim.add_argument("config")
    sim.add_argument("--out", default=None, help="record file (default stdout)")
    sim.add_argument("--checkpoint", default=None, help="write final state here")
    sim.add_argument("--resume", default=None, help="start from this checkpoint")

    st = sub.add_parser("streak", help="integrate x-independent (streak) dynamics")
    st.add_argument("config")
    st.add_argument("--out", default=None)

    vl = sub.add_parser("verify-linear", help="check linear-decay identities/estimates")
    vl.add_argument("--lemma", default="kL2",
                    choices=("kL2", "mixing", "damping-integral", "mode-decay",
                             "field-decay", "field-decay-coupled"))
    vl.add_argument("--k", type=int, default=1)
    vl.add_argument("--l", type=int, default=0)
    vl.add_argument("--eta", type=float, default=0.0)
    vl.add_argument("--nu", type=float, default=1e-3)
    vl.add_argument("--a", type=float, default=2.0)
    vl.add_argument("--samples", type=int, default=16)

    vb = sub.add_parser("verify-bilinear", help="measure product-inequality constants")
    vb.add_argument("--lemma", default="4.3", choices=sorted(verify.BILINEAR_LEMMAS))
    vb.add_argument("--samples", type=int, default=200)

    th = sub.add_parser("threshold", help="bisect the stability edge over nu")
    th.add_argument("config")
    th.add_argument("--mock", action="store_true",
                    help="use the synthetic classifier fixture (edge at nu)")
    th.add_argument("--out", default=None)

    nm = sub.add_parser("norms", help="evaluate energy functionals of a record")
    nm.add_argument("record", help="CSV record produced by simulate/streak")
    nm.add_argument("--nu", type=float, required=True)
    nm.add_argument("--eps0", type=float, default=0.05)
    nm.add_argument("--functional", default=None,
                    choices=("E1", "E2", "E3", "E4", "E5", "E6"))
    nm.add_argument("--out", default=None)

    ck = sub.add_parser("checkpoint", help="inspect or resume a checkpoint")
    cksub = ck.add_subparsers(dest="ck_command", required=True)
    cki = cksub.add_parser("info")
    cki.add_argument("path")
    ckr = cksub.add_parser("resume")
    ckr.add_argument("path")
    ckr.add_argument("--config", required=True)
    ckr.add_argument("--out", default=None)
    return p


def _emit_record(rec: TrajectoryRecord, out: str | None, fmt: str):
    if fmt == "json":
        payload = {
            "meta": rec.meta,
            "flags": rec.flags,
            "times": rec.times,
            "series": rec.series,
        }
        text = dump_json(payload)
        if out:
            with open(out, "w") as f:
                f.write(text)
        else:
            sys.stdout.write(text)
    else:
        if out:
            rec.to_csv(out)
            rec.write_manifest(out + ".manifest.json")
        else:
            sys.stdout.write(rec.to_csv_string())


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on usage errors already
        return int(e.code) if e.code else EXIT_OK

    try:
        return _dispatch(args)
    except (ConfigError, ValueError, FileNotFoundError, KeyError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (RuntimeError, FloatingPointError, np.linalg.LinAlgError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERICAL


def _dispatch(args) -> int:
    if args.command == "simulate":
        cfg = load_sim_config(args.config, seed_override=args.seed)
        rec = dns.simulate(
            cfg, checkpoint_path=args.checkpoint, resume_from=args.resume
        )
        _emit_record(rec, args.out, args.output)
        return EXIT_OK

    if args.command == "streak":
        cfg = load_sim_config(args.config, seed_override=args.seed)
        rec = dns.streak_simulate(cfg)
        _emit_record(rec, args.out, args.output)
        return EXIT_OK

    if args.command == "verify-linear":
        return _verify_linear(args)

    if args.command == "verify-bilinear":
        stat = verify.verify_bilinear_lemmas(
            args.lemma, samples=args.samples, seed=args.seed or 0
        )
        sys.stdout.write(stat.to_json())
        return EXIT_OK

    if args.command == "threshold":
        q = load_threshold_query(
            args.config, seed_override=args.seed, threads=args.threads
        )
        runner = experiments.mock_threshold_runner() if args.mock else None
        res = experiments.run_threshold_bisection(q, runner=runner)
        text = res.to_json(args.out)
        if not args.out:
            sys.stdout.write(text)
        return EXIT_OK

    if args.command == "norms":
        rec = TrajectoryRecord.from_csv(args.record)
        report = norms.energy_functionals(rec, args.nu, eps0=args.eps0)
        payload = report.as_dict()
        if args.functional:
            payload = {
                args.functional: payload[args.functional],
                "components": payload["components"].get(args.functional, {}),
                "nu": args.nu,
            }
        text = dump_json(payload, args.out)
        if not args.out:
            sys.stdout.write(text)
        return EXIT_OK

    if args.command == "checkpoint":
        if args.ck_command == "info":
            info = dns.checkpoint_info(args.path)
            sys.stdout.write(dump_json(info))
            return EXIT_OK
        cfg = load_sim_config(args.config, seed_override=args.seed)
        rec = dns.simulate(cfg, resume_from=args.path)
        _emit_record(rec, args.out, args.output)
        return EXIT_OK

    raise ConfigError(f"unknown command {args.command!r}")


def _verify_linear(args) -> int:
    if args.lemma == "kL2":
        numeric, exact, rel = verify.verify_damping_identity(args.k, args.l, args.eta)
        print(
            f"streamwise-recovery integral k={args.k} l={args.l}: "
            f"numeric={numeric:.12f} exact={exact:.12f} rel_err={rel:.3e}"
        )
        return EXIT_OK
    if args.lemma == "mixing":
        stat = verify.verify_mixing_lower_bound(args.k, l=args.l)
        print(
            f"mixing lower bound k={args.k}: min ratio "
            f"{stat.parameters['min_ratio']:.12f} over {stat.samples} samples"
        )
        return EXIT_OK
    if args.lemma == "damping-integral":
        sup, limit = verify.verify_inviscid_damping_integral(args.k, args.l, args.eta)
        print(
            f"damping integral k={args.k} l={args.l} eta={args.eta}: "
            f"sup={sup:.12f} limit={limit:.12f} (<= pi)"
        )
        return EXIT_OK
    if args.lemma == "mode-decay":
        stat = verify.verify_lemma3b(n_samples=args.samples, seed=args.seed or 0)
        sys.stdout.write(stat.to_json())
        return EXIT_OK
    if args.lemma == "field-decay":
        from .domain import DomainSpec

        stat = verify.verify_prop_decayL0(
            DomainSpec(16, 16, 16, Ly=2.0, nu=args.nu), args.nu, a=args.a,
            seed=args.seed or 0
        )
        sys.stdout.write(stat.to_json())
        return EXIT_OK
    if args.lemma == "field-decay-coupled":
        from .domain import DomainSpec

        stat = verify.verify_prop_decayL0_coupled(
            DomainSpec(16, 16, 16, Ly=2.0, nu=args.nu), args.nu, a=args.a,
            seed=args.seed or 0
        )
        sys.stdout.write(stat.to_json())
        return EXIT_OK
    raise ConfigError(f"unknown linear check {args.lemma!r}")


if __name__ == "__main__":
    sys.exit(main())
