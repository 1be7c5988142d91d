"""Command-line interface.

Exit codes: 0 success, 2 numerical failure, 3 validation failure,
4 configuration error.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import errors
from .continuation import (ContinuationOptions, continue_branch, grazing_scaling_study,
                           solve_grazing, solve_hopf)
from .experiments import EXPERIMENTS, ExperimentSpec, Scale, run_experiment
from .io import read_json, write_csv, write_json
from .model import CoarseWave, ModelParams, load_config
from .profiles import profile_nu, profile_sigma
from .simulate import simulate, track_levelset
from .solver import WaveRecord, solve_wave, wave_family
from .stability import RootWindow, classify, evaluate_E, build_matrices

EXIT_OK = 0
EXIT_NUMERICAL = 2
EXIT_VALIDATION = 3
EXIT_CONFIG = 4


def _params_from(args) -> ModelParams:
    if args.config:
        p, _ = load_config(args.config)
    else:
        p = ModelParams()
    if getattr(args, "beta", None) is not None:
        p = p.with_(beta=args.beta)
    return p


def _out_dir(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_wave(path) -> WaveRecord:
    data = read_json(path)
    if "residual" in data or "wave" in data:
        return WaveRecord.from_dict(data)
    wave = CoarseWave.from_dict(data)
    return WaveRecord(wave=wave, beta=float(data.get("beta", 0.0)),
                      residual=float("nan"), validated=False)


def cmd_solve_wave(args):
    p = _params_from(args)
    out = _out_dir(args)
    if args.guess:
        guess = _load_wave(args.guess).wave
        rec = solve_wave(args.m, guess, p)
    else:
        fam = wave_family(p, args.m)
        if args.m not in fam:
            raise errors.NoConvergence(f"family ladder stopped before m={args.m}")
        rec = fam[args.m]
    write_json(out / f"wave_m{args.m}.json", rec.to_dict())
    if args.profile_csv:
        span = (-0.5 * rec.wave.c * rec.wave.T[-1] - 2.0,
                2.0 * rec.wave.c * rec.wave.T[-1] + 2.0) if rec.wave.m > 1 else (-2.0, 3.0)
        xs = np.linspace(span[0], span[1], 2001)
        write_csv(out / f"profile_m{args.m}.csv", ["xi", "nu", "sigma"],
                  zip(xs, profile_nu(xs, rec.wave, p), profile_sigma(xs, rec.wave, p)))
    print(f"m={args.m} beta={p.beta} c={rec.wave.c:.10g} residual={rec.residual:.3e} "
          f"validated={rec.validated}")
    return EXIT_OK if rec.validated else EXIT_VALIDATION


def cmd_stability(args):
    p = _params_from(args)
    out = _out_dir(args)
    rec = _load_wave(args.wave)
    if rec.beta and args.beta is None and not args.config:
        p = p.with_(beta=rec.beta)
    window = None
    if args.window:
        re_min, re_max, im_max = (float(v) for v in args.window.split(","))
        window = RootWindow(re_min, re_max, im_max)
    rep = classify(rec.wave, p, window=window)
    write_json(out / "stability.json", rep.to_dict())
    if args.grid_csv:
        win = window or RootWindow.default(p)
        mats = build_matrices(rec.wave, p)
        res = np.linspace(win.re_min, win.re_max, 101)
        ims = np.linspace(0.0, win.im_max, 101)
        Z = res[None, :] + 1j * ims[:, None]
        E = evaluate_E(Z, mats)
        rows = [(z.real, z.imag, e.real, e.imag)
                for z, e in zip(Z.ravel(), E.ravel())]
        write_csv(out / "E_grid.csv", ["re", "im", "ReE", "ImE"], rows)
    lead = rep.leading.lam if rep.leading else None
    print(f"classification={rep.classification} leading={lead}")
    return EXIT_OK


def cmd_continue_branch(args):
    p = _params_from(args)
    out = _out_dir(args)
    rec = _load_wave(args.wave)
    if rec.beta and args.beta is None and not args.config:
        p = p.with_(beta=rec.beta)
    opts = ContinuationOptions(direction=args.direction, step=args.step,
                               max_points=args.max_points,
                               beta_min=args.beta_min, beta_max=args.beta_max,
                               stability_every=None if args.no_stability else 1)
    branch = continue_branch(solve_wave(rec.wave.m, rec.wave, p), p, opts)
    from .experiments import _branch_csv
    _branch_csv(out, f"branch_m{rec.wave.m}", branch)
    print(f"points={len(branch.points)} termination={branch.termination} "
          f"events={[(e.kind, round(e.beta, 6)) for e in branch.events]}")
    return EXIT_OK


def cmd_graze(args):
    p = _params_from(args)
    out = _out_dir(args)
    rec = _load_wave(args.wave)
    gp = solve_grazing(rec.wave, args.T_G, args.beta if args.beta else rec.beta, p)
    write_json(out / f"grazing_m{gp.wave.m}.json", gp.to_dict())
    print(f"beta_G={gp.beta:.10g} c={gp.wave.c:.10g} T_G={gp.T_G:.10g} "
          f"residual={gp.residual:.3e}")
    return EXIT_OK


def cmd_hopf(args):
    p = _params_from(args)
    out = _out_dir(args)
    rec = _load_wave(args.wave)
    hp = solve_hopf(rec.wave, args.beta if args.beta else rec.beta, args.omega, p)
    write_json(out / f"hopf_m{hp.wave.m}.json", hp.to_dict())
    print(f"beta_HB={hp.beta:.10g} omega={hp.omega:.10g} residual={hp.residual:.3e}")
    return EXIT_OK


def cmd_graze_scaling(args):
    p = _params_from(args)
    out = _out_dir(args)
    from .continuation import ContinuationOptions as CO
    fam = wave_family(p, 2)
    br = continue_branch(fam[2], p, CO(direction=-1, step=0.25, max_points=120,
                                       beta_min=0.3, stability_every=None))
    ev = [e for e in br.events if e.kind == "grazing"]
    if not ev:
        raise errors.NoConvergence("no grazing point found on the 2-spike branch")
    gp = solve_grazing(ev[0].wave, ev[0].data["T_G"], ev[0].beta, p)
    rows, gp_last, gain, err = grazing_scaling_study(p, args.m_max, gp)
    write_csv(out / "grazing_scaling.csv", ["m", "beta_G", "c", "T_m", "width"], rows)
    write_csv(out / "gain_curve.csv", ["position", "rate"], gain)
    print(f"chain reached m={rows[-1][0]}" + (f" ({err})" if err else ""))
    return EXIT_OK if err is None else EXIT_NUMERICAL


def cmd_simulate(args):
    p = _params_from(args)
    out = _out_dir(args)
    if args.seed_wave:
        init = _load_wave(args.seed_wave)
        if init.beta and args.beta is None and not args.config:
            p = p.with_(beta=init.beta)
    elif args.init_csv:
        data = np.loadtxt(args.init_csv, delimiter=",", skiprows=1)
        init = {"v0": data[:, 0], "s0": data[:, 1]}
    else:
        n = p.domain.n
        init = {"v0": np.full(n, 0.5), "s0": np.zeros(n)}
    traj = simulate(init, p, horizon=args.horizon, sampling_dt=args.sampling_dt)
    write_csv(out / "events.csv", ["time", "neuron", "ordinal"],
              [(e.time, e.neuron, e.ordinal) for e in traj.events])
    if traj.sample_times is not None:
        head = ["time"] + [f"x{k}" for k in range(traj.positions.size)]
        write_csv(out / "snapshots_v.csv", head,
                  [(t, *v) for t, v in zip(traj.sample_times, traj.v_samples)])
        write_csv(out / "snapshots_s.csv", head,
                  [(t, *s) for t, s in zip(traj.sample_times, traj.s_samples)])
    print(f"events={len(traj.events)} horizon={args.horizon}")
    return EXIT_OK


def cmd_speed_stats(args):
    p = _params_from(args)
    out = _out_dir(args)
    if not args.snapshots:
        raise errors.ConfigError("speed-stats requires --snapshots from a simulate run")
    data = np.loadtxt(args.snapshots, delimiter=",", skiprows=1)
    times, s = data[:, 0], data[:, 1:]
    from .simulate import NetworkTrajectory
    traj = NetworkTrajectory(positions=np.asarray(
        [-p.domain.L + 2 * p.domain.L * (k + 1) / s.shape[1] for k in range(s.shape[1])]),
        L=p.domain.L)
    traj.sample_times = times
    traj.s_samples = s
    z, st, skipped = track_levelset(traj, args.level)
    write_json(out / "speed_stats.json", {**st.to_dict(), "skipped": skipped})
    write_csv(out / "levelset.csv", ["time", "z"], zip(times[:len(z)], z))
    print(f"c_bar={st.c_bar:.6g} sigma_c={st.sigma_c:.6g} "
          f"range=[{st.c_min:.6g},{st.c_max:.6g}]")
    return EXIT_OK


def cmd_verify(args):
    """Run the oracle battery: closed forms against quadrature references."""
    from .oracles import quad_compatibility_m1, quad_m_entry, quad_nu, quad_sigma
    from .profiles import profile_nu as nu, profile_sigma as sg, stability_entry_M
    from .solver import compatibility_m1

    rng = np.random.default_rng(args.seed)
    p_base = _params_from(args)
    worst = {"nu": 0.0, "sigma": 0.0, "M": 0.0, "compat": 0.0}
    for _ in range(args.count):
        beta = rng.uniform(1.2, 20.0)
        p = p_base.with_(beta=beta)
        m = int(rng.integers(1, 5))
        c = rng.uniform(0.1, 10.0)
        T = np.concatenate([[0.0], np.cumsum(rng.uniform(0.1, 1.5, m - 1))])
        w = CoarseWave(m=m, c=c, T=T)
        xi = rng.uniform(-3.0, c * T[-1] + 3.0)
        if np.min(np.abs(xi - c * T)) < 1e-5:
            xi += 1e-3
        worst["nu"] = max(worst["nu"], abs(nu(xi, w, p) - quad_nu(xi, w, p)))
        worst["sigma"] = max(worst["sigma"], abs(sg(xi, w, p) - quad_sigma(xi, w, p)))
        i, j = int(rng.integers(0, m)), int(rng.integers(0, m))
        z = complex(rng.uniform(-p.eta + 0.2, 1.0), rng.uniform(-8, 8))
        worst["M"] = max(worst["M"], abs(stability_entry_M(i, j, z, w, p)
                                         - quad_m_entry(i, j, z, w, p)))
        worst["compat"] = max(worst["compat"], abs(compatibility_m1(c, p)
                                                   - quad_compatibility_m1(c, p)))
    ok = all(v <= 1e-8 for v in worst.values())
    for k, v in worst.items():
        print(f"{k}: worst |closed - quadrature| = {v:.3e}")
    print("PASS" if ok else "FAIL")
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_experiment(args):
    scale = Scale(m_max=args.m_max, n=args.n, horizon=args.horizon)
    spec = ExperimentSpec(kind=args.kind, scale=scale)
    summary = run_experiment(spec, _out_dir(args), threads=args.threads,
                             seedless=args.seedless)
    print(f"{args.kind}: {summary}")
    return EXIT_OK


def build_parser():
    ap = argparse.ArgumentParser(prog="ifwaves",
                                 description="Travelling waves, stability and "
                                 "bifurcations of an integrate-and-fire network")
    ap.add_argument("--config", help="JSON config file (model/stimulus/domain/numerics)")
    ap.add_argument("--out", help="output directory (default: cwd)")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--seedless", action="store_true",
                    help="assert the run uses no random source")
    sub = ap.add_subparsers(dest="command", required=True)

    sp = sub.add_parser("solve-wave", help="solve an m-spike wave")
    sp.add_argument("--m", type=int, required=True)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--guess", help="wave or record JSON to start from")
    sp.add_argument("--profile-csv", action="store_true")
    sp.set_defaults(fn=cmd_solve_wave)

    sp = sub.add_parser("stability", help="classify a solved wave")
    sp.add_argument("--wave", required=True)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--window", help="re_min,re_max,im_max")
    sp.add_argument("--grid-csv", action="store_true",
                    help="dump E on a grid for level-set plotting")
    sp.set_defaults(fn=cmd_stability)

    sp = sub.add_parser("continue-branch", help="pseudo-arclength continuation in beta")
    sp.add_argument("--wave", required=True)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--direction", type=int, default=1, choices=(-1, 1))
    sp.add_argument("--step", type=float, default=0.2)
    sp.add_argument("--max-points", type=int, default=200)
    sp.add_argument("--beta-min", type=float, default=0.3)
    sp.add_argument("--beta-max", type=float, default=25.0)
    sp.add_argument("--no-stability", action="store_true")
    sp.set_defaults(fn=cmd_continue_branch)

    sp = sub.add_parser("graze", help="polish a grazing point")
    sp.add_argument("--wave", required=True)
    sp.add_argument("--T-G", type=float, required=True, dest="T_G")
    sp.add_argument("--beta", type=float)
    sp.set_defaults(fn=cmd_graze)

    sp = sub.add_parser("hopf", help="polish an oscillatory bifurcation")
    sp.add_argument("--wave", required=True)
    sp.add_argument("--omega", type=float, required=True)
    sp.add_argument("--beta", type=float)
    sp.set_defaults(fn=cmd_hopf)

    sp = sub.add_parser("graze-scaling", help="bootstrap grazing points up to m_max")
    sp.add_argument("--m-max", type=int, default=30)
    sp.add_argument("--beta", type=float)
    sp.set_defaults(fn=cmd_graze_scaling)

    sp = sub.add_parser("simulate", help="event-driven network simulation")
    sp.add_argument("--horizon", type=float, default=30.0)
    sp.add_argument("--sampling-dt", type=float)
    sp.add_argument("--beta", type=float)
    sp.add_argument("--seed-wave", help="wave record JSON for profile seeding")
    sp.add_argument("--init-csv", help="CSV with v0,s0 columns")
    sp.set_defaults(fn=cmd_simulate)

    sp = sub.add_parser("speed-stats", help="level-set speed statistics of snapshots")
    sp.add_argument("--snapshots", required=True, help="snapshots_s.csv from simulate")
    sp.add_argument("--level", type=float, default=0.1)
    sp.set_defaults(fn=cmd_speed_stats)

    sp = sub.add_parser("verify", help="run the quadrature oracle battery")
    sp.add_argument("--count", type=int, default=25)
    sp.add_argument("--seed", type=int, default=0)
    sp.add_argument("--beta", type=float)
    sp.set_defaults(fn=cmd_verify)

    sp = sub.add_parser("experiment", help="run a desk-scale figure experiment")
    sp.add_argument("kind", choices=sorted(EXPERIMENTS))
    sp.add_argument("--m-max", type=int, default=30)
    sp.add_argument("--n", type=int, default=1000)
    sp.add_argument("--horizon", type=float, default=40.0)
    sp.set_defaults(fn=cmd_experiment)
    return ap


def main(argv=None):
    ap = build_parser()
    args = ap.parse_args(argv)
    try:
        code = args.fn(args)
    except errors.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except errors.ValidationFailed as exc:
        print(f"validation failure: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except errors.IfwavesError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ValueError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    return code


if __name__ == "__main__":
    sys.exit(main())
