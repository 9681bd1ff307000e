"""Command-line front end: simulate, check-gains, oracle-compare.

Every output file starts with a manifest header (command line, config hash,
tool version) so a run can be reproduced byte for byte.  Exit codes:
0 success, 1 usage/config error, 2 numerical failure, 3 certificate or
tolerance failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, builtin_config, config_from_dict, load_config
from .sim import lagrangian_oracle, simulate
from .chain import forward_dynamics
from .stability import compute_bounds, decay_audit, gain_certificate

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NUMERICAL = 2
EXIT_CERTIFICATE = 3

VPF_RESIDUAL_LIMIT = 1e-10
ORACLE_LIMIT = 1e-9


def _manifest(args, doc) -> dict:
    blob = json.dumps(doc, sort_keys=True).encode()
    return {
        "command": " ".join(getattr(args, "argv", None) or [args.command]),
        "config_sha256": hashlib.sha256(blob).hexdigest(),
        "version": __version__,
    }


def _resolve_config(args):
    if args.config is not None:
        cfg, doc = load_config(args.config)
    else:
        doc = builtin_config(args.builtin)
        cfg = config_from_dict(doc)
    overrides = {}
    if getattr(args, "t_end", None) is not None:
        overrides["t_end"] = args.t_end
    if getattr(args, "dt", None) is not None:
        overrides["dt"] = args.dt
    if overrides:
        doc = dict(doc)
        doc["integration"] = {**doc["integration"], **overrides}
        cfg = config_from_dict(doc)
    return cfg, doc


def _write_csv(path: Path, manifest: dict, rec, n: int):
    cols = ["t"]
    for i in range(1, n + 1):
        cols += [f"q{i}", f"q_d{i}", f"e{i}", f"q_hat{i}", f"qdot_hat{i}",
                 f"qdot{i}", f"tau{i}"]
    cols += ["nu"]
    cols += [f"nu_link{i}" for i in range(1, n + 1)]
    cols += [f"nu_joint{i}" for i in range(1, n + 1)]
    cols += ["vpf_residual"]
    data = [rec.t]
    for i in range(n):
        data += [rec.q[:, i], rec.q_d[:, i], rec.e[:, i], rec.q_hat[:, i],
                 rec.qdot_hat[:, i], rec.qdot[:, i], rec.tau[:, i]]
    data.append(rec.nu)
    data += [rec.nu_link[:, i] for i in range(n)]
    data += [rec.nu_joint[:, i] for i in range(n)]
    data.append(rec.vpf_residual)
    table = np.column_stack(data)
    with path.open("w", newline="\n") as fh:
        for key, value in manifest.items():
            fh.write(f"# {key}: {value}\n")
        fh.write(",".join(cols) + "\n")
        for row in table:
            fh.write(",".join("%.17g" % v for v in row) + "\n")


def cmd_simulate(args) -> int:
    cfg, doc = _resolve_config(args)
    manifest = _manifest(args, doc)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        rec = simulate(cfg)
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL

    realized_mv = rec.realized_velocity_bound()
    cert = gain_certificate(cfg.chain, cfg.obs_gains, cfg.ctl_gains,
                            cfg.trajectory.velocity_bound)
    bounds = compute_bounds(cfg.chain, cfg.obs_gains, cfg.ctl_gains,
                            velocity_bound=realized_mv)
    report = decay_audit(rec, cfg.chain, bounds)

    _write_csv(out / "trajectory.csv", manifest, rec, cfg.chain.n)
    audit_doc = {
        "manifest": manifest,
        "certificate": {
            "passed": cert.passed,
            "link_margins": list(cert.link_margins),
            "joint_margins": list(cert.joint_margins),
            "radius": cert.radius,
        },
        "realized_velocity_bound": realized_mv,
        "alpha_p": report["alpha_p"],
        "violations": report["violations"],
        "subsystem_violations": report["subsystem_violations"],
        "vpf_residual_max": report["vpf_residual_max"],
        "decay_rate": report["decay_rate"],
        "monotonicity_increases": report["monotonicity_increases"],
        "nu_initial": float(rec.nu[0]),
        "nu_final": float(rec.nu[-1]),
    }
    (out / "audit.json").write_text(
        json.dumps(audit_doc, indent=2, sort_keys=True) + "\n")
    cert_text = "\n".join(f"# {k}: {v}" for k, v in manifest.items())
    (out / "certificate.txt").write_text(cert_text + "\n" + str(cert) + "\n")

    if not cert.passed:
        print("gain certificate failed", file=sys.stderr)
        return EXIT_CERTIFICATE
    if (report["violations"] > 0
            or report["vpf_residual_max"] > VPF_RESIDUAL_LIMIT):
        print("decay audit failed: "
              f"{report['violations']} violations, "
              f"max power-flow residual {report['vpf_residual_max']:.3g}",
              file=sys.stderr)
        return EXIT_CERTIFICATE
    print(f"wrote {out / 'trajectory.csv'}, {out / 'audit.json'}, "
          f"{out / 'certificate.txt'}")
    return EXIT_OK


def cmd_check_gains(args) -> int:
    cfg, doc = _resolve_config(args)
    cert = gain_certificate(cfg.chain, cfg.obs_gains, cfg.ctl_gains,
                            cfg.trajectory.velocity_bound)
    print("\n".join(f"# {k}: {v}" for k, v in _manifest(args, doc).items()))
    print(cert)
    for i, m in enumerate(cert.link_margins):
        if m <= 0:
            if cfg.ctl_gains.link_gain[i] <= 1.0:
                print(f"violated: link {i + 1} control gain must exceed 1",
                      file=sys.stderr)
            else:
                print(f"violated: link {i + 1} observer gain below the "
                      "Coriolis-coupling threshold", file=sys.stderr)
    for i, m in enumerate(cert.joint_margins):
        if m <= 0:
            print(f"violated: joint {i + 1} rotor/velocity-gain product "
                  "below max(2, m_c^2 + k), or ell not positive",
                  file=sys.stderr)
    if np.isnan(cert.radius):
        print(f"violated: {cert.message}", file=sys.stderr)
    return EXIT_OK if cert.passed else EXIT_CERTIFICATE


def cmd_oracle_compare(args) -> int:
    cfg, doc = _resolve_config(args)
    if cfg.chain.n != 2:
        print("oracle requires 2-DoF planar", file=sys.stderr)
        return EXIT_USAGE
    print("\n".join(f"# {k}: {v}" for k, v in _manifest(args, doc).items()))
    if args.samples == 0:
        print("warning: zero samples requested, nothing compared")
        print("max deviation: 0")
        return EXIT_OK
    rng = np.random.default_rng(args.seed)
    worst = 0.0
    for _ in range(args.samples):
        q = rng.uniform(-np.pi, np.pi, 2)
        qdot = rng.uniform(-5.0, 5.0, 2)
        tau = rng.uniform(-50.0, 50.0, 2)
        ref = lagrangian_oracle(cfg.chain, q, qdot, tau,
                                mass_scale=args.perturb_oracle_mass)
        got = forward_dynamics(cfg.chain, q, qdot, tau)
        worst = max(worst, float(np.max(np.abs(got - ref))))
    print(f"max deviation: {worst:.6g} over {args.samples} states "
          f"(seed {args.seed})")
    if worst > ORACLE_LIMIT:
        print(f"deviation {worst:.6g} exceeds {ORACLE_LIMIT:g}",
              file=sys.stderr)
        return EXIT_CERTIFICATE
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vdcsim",
        description="Simulate and certify observer-based manipulator control")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p):
        p.add_argument("--config", help="scenario config JSON file")
        p.add_argument("--builtin", default="twodof",
                       help="built-in scenario name (default: twodof)")

    p = sub.add_parser("simulate", help="run a scenario and write outputs")
    add_config_flags(p)
    p.add_argument("--t-end", type=float, dest="t_end")
    p.add_argument("--dt", type=float)
    p.add_argument("--out", default="runs", help="output directory")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("check-gains", help="print gain certificates")
    add_config_flags(p)
    p.set_defaults(func=cmd_check_gains)

    p = sub.add_parser("oracle-compare",
                       help="compare recursive dynamics with the closed form")
    add_config_flags(p)
    p.add_argument("--samples", type=int, default=1000)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--perturb-oracle-mass", type=float, default=1.0,
                   help=argparse.SUPPRESS)
    p.set_defaults(func=cmd_oracle_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    args.argv = list(argv) if argv is not None else sys.argv[1:]
    try:
        return args.func(args)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except FloatingPointError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
