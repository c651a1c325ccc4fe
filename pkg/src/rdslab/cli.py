"""Experiment runner: stage subcommands, deterministic seeding, artifacts.

Every stage writes machine-readable CSV/JSON stamped with the canonical
config hash; a timestamp lives only in metadata.json so reruns with the same
config are byte-identical.  Exit codes: 0 success, 2 verification failure,
3 config error, 4 horizon or convergence exhaustion.

BLAS threading is pinned to one thread before numpy loads, so results do not
depend on the --threads flag (which only caps the runner's own worker pools;
the shipped stages are sequential and deterministic either way).
"""

from __future__ import annotations

import argparse
import json
import os
import sys


def _pin_blas() -> None:
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
                "NUMEXPR_NUM_THREADS"):
        os.environ.setdefault(var, "1")


_pin_blas()

EXIT_OK = 0
EXIT_VERIFY = 2
EXIT_CONFIG = 3
EXIT_EXHAUSTED = 4

STAGES = ("simulate", "lyapunov", "ldp", "spectrum", "young", "horseshoe",
          "verify", "report")


def _write_lines(path, lines: list[str]) -> None:
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def _csv(path, cfg_hash: str, header: str, rows: list[str]) -> None:
    _write_lines(path, [f"# config_hash={cfg_hash}", header] + rows)


def _read_csv(path):
    with open(path) as fh:
        lines = [ln.rstrip("\n") for ln in fh]
    if not lines or not lines[0].startswith("# config_hash="):
        raise ValueError(f"{path} missing config hash stamp")
    h = lines[0].split("=", 1)[1]
    header = lines[1].split(",")
    rows = [ln.split(",") for ln in lines[2:] if ln]
    return h, header, rows


def _json_dump(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=1, sort_keys=True)
        fh.write("\n")


def _metadata(out_dir, stage: str, cfg_hash: str) -> None:
    import time

    _json_dump(os.path.join(out_dir, "metadata.json"),
               {"stage": stage, "config_hash": cfg_hash,
                "generated_at": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                "argv": sys.argv[1:]})


def _noise(cfg, *tags):
    from .noise import NoiseStream

    return NoiseStream(cfg.sigma, (cfg.seed, *tags))


def run_simulate(cfg, out_dir: str) -> str:
    from .dynamics import export_orbit_csv, orbit
    from .models import get_model
    from .stats import stationary_histogram

    model = get_model(cfg.model)
    blk = cfg.stage("simulate")
    orb = orbit(model, _noise(cfg, 0x51), blk["x0"], blk["n"])
    path = os.path.join(out_dir, "orbit.csv")
    export_orbit_csv(orb, path)
    with open(path) as fh:
        content = fh.read()
    with open(path, "w") as fh:
        fh.write(f"# config_hash={cfg.hash}\n" + content)
    hist = stationary_histogram(model, cfg.sigma, bins=64,
                                n_steps=max(blk["n"], 10000), seed=cfg.seed)
    rows = [f"{hist.bin_lo[i]!r},{hist.bin_hi[i]!r},{hist.freq[i]!r}"
            for i in range(hist.freq.size)]
    _csv(os.path.join(out_dir, "histogram.csv"), cfg.hash, "bin_lo,bin_hi,freq", rows)
    return f"orbit of {blk['n']} steps and 64-bin histogram written"


def run_lyapunov(cfg, out_dir: str) -> str:
    from .models import get_model
    from .stats import estimate_lyapunov

    blk = cfg.stage("lyapunov")
    est = estimate_lyapunov(get_model(cfg.model), cfg.sigma, blk["burn_in"],
                            blk["n"], blk["replicas"], cfg.seed)
    _csv(os.path.join(out_dir, "lyapunov.csv"), cfg.hash,
         "model,sigma,lambda_hat,std_err,n,replicas",
         [f"{cfg.model},{cfg.sigma!r},{est.lambda_hat!r},{est.std_err!r},"
          f"{est.n_steps},{est.n_replicas}"])
    return f"lambda_hat={est.lambda_hat!r} std_err={est.std_err!r}"


def run_ldp(cfg, out_dir: str) -> str:
    from .models import get_model
    from .stats import ldp_tail

    blk = cfg.stage("ldp")
    curve = ldp_tail(get_model(cfg.model), cfg.sigma, blk["epsilon"], blk["delta"],
                     list(blk["n_list"]), blk["replicas"], cfg.seed)
    rows = [f"{r.n},{r.prob_S!r},{r.prob_Z!r},{r.hits_S},{r.hits_Z}"
            for r in curve.rows]
    _csv(os.path.join(out_dir, "tail.csv"), cfg.hash,
         "n,prob_S,prob_Z,hits_S,hits_Z", rows)
    _json_dump(os.path.join(out_dir, "ldp_summary.json"),
               {"config_hash": cfg.hash, "epsilon": blk["epsilon"],
                "delta": blk["delta"], "fitted_rate": curve.fitted_rate,
                "fit_r2": curve.fit_r2, "fitted_rate_Z": curve.fitted_rate_Z,
                "fit_r2_Z": curve.fit_r2_Z, "lambda_hat": curve.lambda_hat,
                "rejected_starts": curve.rejected_starts,
                "replicas": blk["replicas"]})
    return (f"tail over n={blk['n_list']}: rate={curve.fitted_rate:.4f} "
            f"R2={curve.fit_r2:.3f}")


def run_spectrum(cfg, out_dir: str) -> str:
    from .models import get_model
    from .ulam import UlamGrid, build_tilted, dump_operator, spectral_radius

    model = get_model(cfg.model)
    blk = cfg.stage("spectrum")
    grid = UlamGrid(blk["n_cells"])
    rows = []
    for theta in blk["theta_list"]:
        op = build_tilted(model, cfg.sigma, grid, float(theta))
        res = spectral_radius(op, tol=blk["tol"], max_iter=blk["max_iter"])
        rows.append(f"{float(theta)!r},{res.lambda_theta!r},{res.residual!r},"
                    f"{res.iterations},{grid.n_cells}")
        if blk["dump_operators"]:
            dump_operator(op, os.path.join(out_dir, f"operator_theta_{theta}.bin"))
    _csv(os.path.join(out_dir, "spectrum.csv"), cfg.hash,
         "theta,lambda_theta,residual,iterations,n_cells", rows)
    return f"{len(rows)} tilted spectra at N={blk['n_cells']}"


def _calibration(cfg, out_dir: str, target=None, suffix: str = ""):
    from .covering import CalibrationSearch, ReferenceCalibration, calibrate_reference
    from .enclosure import Ball
    from .models import get_model

    path = os.path.join(out_dir, f"calibration{suffix}.json")
    if os.path.exists(path):
        with open(path) as fh:
            data = json.load(fh)
        if data.get("config_hash") == cfg.hash:
            return ReferenceCalibration.from_dict(data)
    blk = cfg.stage("covering")
    search = CalibrationSearch(
        eta=blk["eta"], orbit_cap=blk["orbit_cap"], n_max=blk["n_max"],
        pilot_replicas=blk["pilot_replicas"], rho_replicas=blk["rho_replicas"],
        ball_grid=blk["ball_grid"], rho_target=blk["rho_target"],
        target_region=Ball(*target) if target else None,
        iota_frac=blk["iota_frac"])
    calib = calibrate_reference(get_model(cfg.model), cfg.sigma,
                                blk["epsilon_scale"], search, seed=cfg.seed)
    payload = calib.to_dict()
    payload["config_hash"] = cfg.hash
    _json_dump(path, payload)
    return calib


def _ht_params(cfg, variant_override=None):
    from .hyperbolic import HTParams

    blk = cfg.stage("young")
    return HTParams(sigma=blk["ht_sigma"], b=blk["b"], r=blk["r"],
                    sparsity_N=blk["sparsity"],
                    variant=variant_override or blk["variant"])


def run_young(cfg, out_dir: str, variant_override=None) -> str:
    import numpy as np

    from .dynamics import orbit
    from .enclosure import Ball
    from .errors import CriticalHit, HorizonExceeded
    from .hyperbolic import ball_young_time, hyperbolic_times, young_times
    from .models import get_model
    from .noise import NoiseStream

    model = get_model(cfg.model)
    blk = cfg.stage("young")
    calib = _calibration(cfg, out_dir)
    params = _ht_params(cfg, variant_override)

    rows = []
    for rep in range(blk["replicas"]):
        stream = NoiseStream(cfg.sigma, (cfg.seed, 0x59, rep))
        x0 = float(NoiseStream(1.0, (cfg.seed, 0x5A, rep)).uniform01_block(0, 1)[0])
        try:
            orb = orbit(model, stream, x0, blk["horizon"])
        except CriticalHit:
            continue
        rec = young_times(orb, params, calib)
        sparse = set(rec.sparse_times.tolist())
        young = {w.time: w.event for w in rec.witnesses}
        for i in rec.hyperbolic_times.tolist():
            ev = young.get(i)
            rows.append(f"{rep},{i},{int(i in sparse)},{int(ev is not None)},"
                        f"{ev.step if ev else -1},{orb.states[i]!r}")
    _csv(os.path.join(out_dir, "young_times.csv"), cfg.hash,
         "replica,i,is_sparse,is_young,covering_step,witness_x", rows)

    mrows = []
    for k in blk["m_ladder_k"]:
        diam = 2.0 ** (-k) * calib.delta1
        ball = Ball(calib.J.center, diam / 2.0)
        vals = []
        for rep in range(blk["m_replicas"]):
            stream = NoiseStream(cfg.sigma, (cfg.seed, 0x5B, k, rep))
            try:
                bst = ball_young_time(model, stream, ball, params, calib,
                                      horizon=blk["m_horizon"])
                vals.append(bst.m_value)
                n_min = bst.n_min
            except HorizonExceeded as exc:
                n_min = exc.record.n_min
        arr = np.asarray(vals)
        m_mean = float(arr.mean()) if arr.size else float("nan")
        m_std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
        mrows.append(f"{ball.radius!r},{m_mean!r},{m_std!r},{n_min},{arr.size}")
    _csv(os.path.join(out_dir, "m_stats.csv"), cfg.hash,
         "interval_radius,m_mean,m_std,n_min,replicas", mrows)
    return f"{len(rows)} hyperbolic-time rows, {len(mrows)} ladder sizes"


def run_horseshoe(cfg, out_dir: str, variant_override=None) -> str:
    from .enclosure import Ball
    from .errors import EmptyIntersection, HorizonExceeded, PullbackEmpty
    from .horseshoe import (build_certificate, collect_cover_family, find_pair,
                            split_reference, symbolic_shadow)
    from .models import get_model
    from .noise import NoiseStream

    model = get_model(cfg.model)
    blk = cfg.stage("horseshoe")
    params = _ht_params(cfg, variant_override)
    targets = blk["seed_set"] or [None]
    all_ok = True
    summaries = []
    for a_idx, target in enumerate(targets):
        calib = _calibration(cfg, out_dir, target=target, suffix=f"_A{a_idx}")
        balls = split_reference(calib.J, blk["M"])
        success = False
        last_cert = None
        for attempt in range(blk["attempts"]):
            noise_seed = [cfg.seed, 0x48, a_idx, attempt]
            noise = NoiseStream(cfg.sigma, tuple(noise_seed))
            try:
                fams = [collect_cover_family(model, noise, b, params, calib,
                                             horizon=blk["horizon"], index=i,
                                             leg_horizon=blk["leg_horizon"])
                        for i, b in enumerate(balls)]
                sel = find_pair(fams)
                if sel.times.size < 2:
                    continue
                cert = build_certificate(
                    model, noise, (fams[sel.i], fams[sel.j]), sel.times,
                    kappa_target=blk["kappa"], params=params, calib=calib,
                    max_blocks=blk["max_blocks"], noise_seed=noise_seed)
            except (EmptyIntersection, HorizonExceeded):
                continue
            last_cert = cert
            if not cert.all_ok:
                continue
            cert.dump(os.path.join(out_dir, f"certificate_A{a_idx}.json"))
            proofs = {}
            try:
                for widx in range(2 ** blk["words_len"]):
                    word = format(widx, f"0{blk['words_len']}b")
                    proof = symbolic_shadow(cert, word)
                    proofs[word] = {"witness": proof.witness_str,
                                    "witness_float": proof.witness_x,
                                    "verified": proof.verified,
                                    "nested": proof.nested}
            except PullbackEmpty:
                continue
            if not all(p["verified"] for p in proofs.values()):
                continue
            _json_dump(os.path.join(out_dir, f"shadowing_A{a_idx}.json"),
                       {"config_hash": cfg.hash, "words": proofs})
            summaries.append(f"A{a_idx}: ok at attempt {attempt} "
                             f"({len(cert.blocks)} blocks)")
            success = True
            break
        if not success:
            if last_cert is not None:
                last_cert.dump(os.path.join(out_dir, f"certificate_A{a_idx}.json"))
            summaries.append(f"A{a_idx}: FAILED after {blk['attempts']} attempts")
            all_ok = False
    if not all_ok:
        raise _HorseshoeFailed("; ".join(summaries))
    return "; ".join(summaries)


class _HorseshoeFailed(Exception):
    pass


def run_verify(cfg, out_dir: str, cert_path=None) -> str:
    from .errors import VerificationFailed
    from .horseshoe import HorseshoeCertificate, verify_certificate

    paths = ([cert_path] if cert_path else
             sorted(p for p in os.listdir(out_dir) if p.startswith("certificate_")
                    and p.endswith(".json")))
    if not paths:
        raise VerificationFailed("no-certificate")
    msgs = []
    for p in paths:
        full = p if os.path.isabs(str(p)) else os.path.join(out_dir, p)
        cert = HorseshoeCertificate.load(full)
        flags, failures = verify_certificate(cert)
        if not all(flags.values()):
            bad = sorted({f[0] for f in failures} | {k for k, v in flags.items() if not v})
            raise VerificationFailed(",".join(bad))
        msgs.append(f"{os.path.basename(str(full))}: all clauses re-verified")
    return "; ".join(msgs)


def run_report(cfg, out_dir: str) -> str:
    import math

    import numpy as np

    from .errors import MissingArtifact
    from .stats import linear_fit

    required = ["lyapunov.csv", "spectrum.csv", "tail.csv"]
    missing = [p for p in required if not os.path.exists(os.path.join(out_dir, p))]
    if missing:
        raise MissingArtifact(missing)
    report = {"config_hash": cfg.hash}
    hashes = set()

    h, _, rows = _read_csv(os.path.join(out_dir, "lyapunov.csv"))
    hashes.add(h)
    lam = float(rows[0][2])
    report["lyapunov"] = {"model": rows[0][0], "lambda_hat": lam,
                          "std_err": float(rows[0][3]), "n": int(rows[0][4]),
                          "replicas": int(rows[0][5])}

    h, _, rows = _read_csv(os.path.join(out_dir, "spectrum.csv"))
    hashes.add(h)
    spec_rows = [{"theta": float(r[0]), "lambda_theta": float(r[1]),
                  "residual": float(r[2]), "iterations": int(r[3]),
                  "n_cells": int(r[4])} for r in rows]
    report["spectrum"] = spec_rows
    fit_pts = [(r["theta"], abs(r["lambda_theta"] - 1.0 - r["theta"] * lam))
               for r in spec_rows if r["theta"] > 0]
    fit_pts = [(t, v) for t, v in fit_pts if v > 0]
    if len(fit_pts) >= 2:
        lx = np.log([p[0] for p in fit_pts])
        ly = np.log([p[1] for p in fit_pts])
        report["taylor_exponent_p"] = float(np.polyfit(lx, ly, 1)[0])

    h, _, rows = _read_csv(os.path.join(out_dir, "tail.csv"))
    hashes.add(h)
    report["tail"] = [{"n": int(r[0]), "prob_S": float(r[1]), "prob_Z": float(r[2]),
                       "hits_S": int(r[3]), "hits_Z": int(r[4])} for r in rows]
    pts = [(row["n"], row["prob_S"]) for row in report["tail"] if row["hits_S"] >= 10]
    if len(pts) >= 2:
        slope, _, r2 = linear_fit(np.array([p[0] for p in pts], dtype=float),
                                  np.array([-math.log(p[1]) for p in pts]))
        report["tail_fit"] = {"rate": slope, "r2": r2}

    m_path = os.path.join(out_dir, "m_stats.csv")
    if os.path.exists(m_path):
        h, _, rows = _read_csv(m_path)
        hashes.add(h)
        pts = [(math.log(1.0 / (2.0 * float(r[0]))), float(r[1])) for r in rows
               if float(r[1]) == float(r[1])]
        if len(pts) >= 2:
            slope, intercept, r2 = linear_fit(np.array([p[0] for p in pts]),
                                              np.array([p[1] for p in pts]))
            n_eff = sum(int(r[4]) for r in rows)
            report["m_regression"] = {"slope": slope, "intercept": intercept,
                                      "r2": r2, "total_replicas": n_eff}

    y_path = os.path.join(out_dir, "young_times.csv")
    if os.path.exists(y_path):
        h, _, rows = _read_csv(y_path)
        hashes.add(h)
        total = len(rows)
        young = sum(1 for r in rows if r[3] == "1")
        sparse = sum(1 for r in rows if r[2] == "1")
        report["young"] = {"hyperbolic_rows": total, "sparse": sparse, "young": young}

    certs = sorted(p for p in os.listdir(out_dir)
                   if p.startswith("certificate_") and p.endswith(".json"))
    if certs:
        flags = {}
        for p in certs:
            with open(os.path.join(out_dir, p)) as fh:
                c = json.load(fh)
            if c.get("calib", {}).get("config_hash"):
                hashes.add(c["calib"]["config_hash"])
            flags[p] = c["flags"]
        report["certificates"] = flags

    if len(hashes - {cfg.hash}) > 0:
        raise MissingArtifact([f"hash-mismatch:{h}" for h in sorted(hashes - {cfg.hash})])
    _json_dump(os.path.join(out_dir, "report.json"), report)
    return "report.json written"


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rdslab",
                                description="numerical laboratory for noisy expanding circle maps")
    p.add_argument("stage", choices=STAGES)
    p.add_argument("--config", required=False, help="experiment config (JSON)")
    p.add_argument("--out", default=None, help="output directory (default from config)")
    p.add_argument("--seed", type=int, default=None, help="override the config seed")
    p.add_argument("--threads", type=int, default=1, help="worker cap (results are identical for any value)")
    p.add_argument("--variant", choices=("paper_literal", "standard_alves"), default=None)
    p.add_argument("--cert", default=None, help="certificate path for the verify stage")
    return p


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    from .config import load_config
    from .errors import (BranchExplosion, CalibrationFailed, ConfigError,
                         CriticalHit, EmptyIntersection, HorizonExceeded,
                         MissingArtifact, NoConvergence, NoFeasibleM,
                         PullbackEmpty, VerificationFailed)

    def fail(exc, code: int) -> int:
        payload = {"error": type(exc).__name__, "message": str(exc), "exit": code}
        print(json.dumps(payload, sort_keys=True), file=sys.stderr)
        return code

    try:
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        if not args.config:
            raise ConfigError("--config is required")
        cfg = load_config(args.config)
        if args.seed is not None:
            from dataclasses import replace

            cfg = replace(cfg, seed=args.seed)
        out_dir = args.out or cfg.out_dir
        if not out_dir:
            raise ConfigError("no output directory: pass --out or set out_dir")
        os.makedirs(out_dir, exist_ok=True)

        runners = {
            "simulate": lambda: run_simulate(cfg, out_dir),
            "lyapunov": lambda: run_lyapunov(cfg, out_dir),
            "ldp": lambda: run_ldp(cfg, out_dir),
            "spectrum": lambda: run_spectrum(cfg, out_dir),
            "young": lambda: run_young(cfg, out_dir, args.variant),
            "horseshoe": lambda: run_horseshoe(cfg, out_dir, args.variant),
            "verify": lambda: run_verify(cfg, out_dir, args.cert),
            "report": lambda: run_report(cfg, out_dir),
        }
        summary = runners[args.stage]()
        _metadata(out_dir, args.stage, cfg.hash)
        print(f"{args.stage}: {summary}")
        return EXIT_OK
    except ConfigError as exc:
        return fail(exc, EXIT_CONFIG)
    except MissingArtifact as exc:
        return fail(exc, EXIT_CONFIG)
    except (VerificationFailed, PullbackEmpty, _HorseshoeFailed) as exc:
        return fail(exc, EXIT_VERIFY)
    except (HorizonExceeded, NoConvergence, EmptyIntersection, CalibrationFailed,
            NoFeasibleM, BranchExplosion, CriticalHit) as exc:
        return fail(exc, EXIT_EXHAUSTED)


if __name__ == "__main__":
    sys.exit(main())
