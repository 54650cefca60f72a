"""Batch experiment runner.

Subcommands: sample, oracle, equivalence, dlr, invariance, entropy, sausage,
verify.  Identical config + seed produce byte-identical statistic streams;
replicas use streams keyed by (seed, replica) and are merged in index order,
so output never depends on scheduling.

Exit codes: 0 ok, 2 config error, 3 budget error, 4 structural/model error,
5 acceptance failure.
"""

import argparse
import concurrent.futures
import json
import math
import os
import sys

import numpy as np

from . import acceptance
from .config import default_config_doc, load_config, validate_config
from .errors import BudgetError, ConfigurationError, StructuralError
from .hamiltonians import entropy_bound_constant, log_density_rl, loop_measure_mass
from .representations import cut_rl_to_fk, save_config, time_reverse_config, RlConfig
from .samplers.chain import mh_rl_chain, new_chain_state, split_chain_diagnostic
from .samplers.dlr import DlrSpec, dlr_resample
from .samplers.ideal import sample_ideal_rl
from .samplers.oracle import OracleSpec, enumeration_oracle
from .statistics import (
    cycle_lengths,
    f1,
    relative_entropy_estimate,
    sausage_diagnostics,
    two_sample_test,
)
from .streams import stream
from .trajectories import time_shift

SUBCOMMANDS = ("sample", "oracle", "equivalence", "dlr", "invariance",
               "entropy", "sausage", "verify")

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_BUDGET = 3
EXIT_STRUCTURAL = 4
EXIT_ACCEPTANCE = 5


def _fmt(x):
    """17 significant digits: guarantees float round-trip."""
    if isinstance(x, float):
        return float(f"{x:.17g}")
    return x


class RecordWriter:
    """Single JSONL writer; one record per line, deterministic key order."""

    def __init__(self, path, config_hash, seed):
        self.path = path
        self.config_hash = config_hash
        self.seed = seed
        self._fh = open(path, "w")

    def emit(self, name, value, stderr=0.0, n_samples=1, replica=0, extra=None):
        rec = {
            "name": name,
            "value": _fmt(float(value)),
            "stderr": _fmt(float(stderr)),
            "n_samples": int(n_samples),
            "seed": self.seed,
            "replica": int(replica),
            "config_hash": self.config_hash,
        }
        if extra:
            rec["extra"] = {k: _fmt(v) for k, v in sorted(extra.items())}
        self._fh.write(json.dumps(rec, sort_keys=True) + "\n")

    def close(self):
        self._fh.close()


def write_histogram_csv(hist, path):
    with open(path, "w") as fh:
        fh.write("bin_low,bin_high,count\n")
        for lo, hi, c in zip(hist.edges[:-1], hist.edges[1:], hist.counts):
            fh.write(f"{lo:.17g},{hi:.17g},{c:.17g}\n")


def _maybe_plot(cfg, hist, out_dir, stem, title):
    if not cfg.output.get("plots", True):
        return
    from .plotting import save_histogram

    save_histogram(hist, os.path.join(out_dir, stem + ".svg"), title=title,
                   xlabel="cycle length", ylabel="count", salt=cfg.config_hash)


# ---------------------------------------------------------------------------
# per-replica experiment bodies (top level so they can cross process bounds)
# ---------------------------------------------------------------------------


def _chain_samples(raw_doc, replica, collectors):
    """Run the configured sampler for one replica; returns per-sample stats.

    Takes the raw config document (picklable) so replicas can run in worker
    processes; the model is rebuilt inside the worker.
    """
    cfg = validate_config(raw_doc)
    rng = stream(cfg.seed, replica)
    out = {name: [] for name in collectors}
    hist_counts = {}
    last = None
    if cfg.sampler["kind"] == "ideal":
        for _ in range(cfg.sampler["n_samples"]):
            rho = sample_ideal_rl(cfg.params, rng, j_max=cfg.sampler["j_max"])
            last = rho
            _collect(rho, out, hist_counts, collectors)
        max_logdens = None
    else:
        state = new_chain_state(cfg.params, cfg.model)
        mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["burn_in"], rng,
                    j_max=cfg.sampler["j_max"],
                    n_total_max=cfg.sampler.get("n_total_max"))
        for _ in range(cfg.sampler["n_samples"]):
            mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["thin"], rng,
                        j_max=cfg.sampler["j_max"],
                        n_total_max=cfg.sampler.get("n_total_max"))
            rho = state.config
            last = rho
            _collect(rho, out, hist_counts, collectors)
        max_logdens = state.max_log_density
    return out, hist_counts, last, max_logdens


def _collect(rho, out, hist_counts, collectors):
    gamma = cut_rl_to_fk(rho)
    values = {
        "n_bridges": float(len(gamma)),
        "f1": f1(gamma),
        "sum_lengths": float(sum(l.length for l in rho.loops)),
    }
    for name in collectors:
        if name == "cycle_hist":
            for length in cycle_lengths(gamma):
                hist_counts[length] = hist_counts.get(length, 0) + 1
        elif name in values:
            out[name].append(values[name])


def _summarize(writer, name, series, replica):
    vals = np.asarray(series, dtype=float)
    if vals.size == 0:
        return
    stderr = float(np.std(vals, ddof=1) / math.sqrt(vals.size)) if vals.size > 1 else 0.0
    writer.emit(name, float(np.mean(vals)), stderr, vals.size, replica)


def cmd_sample(cfg, out_dir, replicas, writer):
    collectors = [s for s in cfg.statistics]
    results = _map_replicas(_chain_samples, cfg.raw, replicas, collectors)
    merged_hist = {}
    for replica, (series, hist_counts, last, max_logdens) in enumerate(results):
        for name, vals in series.items():
            if name != "cycle_hist":
                _summarize(writer, name, vals, replica)
                z, m1, m2 = split_chain_diagnostic(vals)
                if not math.isnan(z):
                    # convergence is reported, never silently assumed
                    writer.emit(f"split_chain_z_{name}", z, 0.0, len(vals), replica,
                                extra={"first_half": m1, "second_half": m2})
        for length, count in hist_counts.items():
            merged_hist[length] = merged_hist.get(length, 0) + count
        if max_logdens is not None and cfg.model.constants is not None:
            writer.emit("max_log_density", max_logdens, 0.0, 1, replica)
        if last is not None:
            save_config(last, os.path.join(out_dir, f"config_replica{replica}.json"))
    if "cycle_hist" in cfg.statistics and merged_hist:
        from .statistics import Histogram

        top = max(merged_hist)
        counts = [merged_hist.get(j, 0) for j in range(1, top + 1)]
        hist = Histogram(np.arange(0.5, top + 1.5), np.array(counts, dtype=float))
        write_histogram_csv(hist, os.path.join(out_dir, "cycle_hist.csv"))
        _maybe_plot(cfg, hist, out_dir, "cycle_hist", "cycle length histogram")
    return EXIT_OK


def _map_replicas(fn, raw_doc, replicas, *args):
    """Run replicas concurrently but merge deterministically by index."""
    if replicas <= 1:
        return [fn(raw_doc, 0, *args)]
    workers = min(replicas, os.cpu_count() or 1)
    with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(fn, raw_doc, i, *args) for i in range(replicas)]
        return [f.result() for f in futures]


def cmd_oracle(cfg, out_dir, replicas, writer):
    spec = OracleSpec(
        n_max=cfg.oracle["n_max"],
        position_nodes=cfg.oracle["position_nodes"],
        bridge_samples=cfg.oracle["bridge_samples"],
        budget=cfg.oracle["budget"],
        kappa=cfg.kappa,
    )
    r_cell = cfg.model.constants.r if cfg.model.constants else 1.0
    for replica in range(replicas):
        res = enumeration_oracle(spec, cfg.model, cfg.params,
                                 stream(cfg.seed, replica, 1),
                                 routes=("fk", "cycle"), r_cell=r_cell)
        for route_name, route in res.routes.items():
            writer.emit(f"Z_{route_name}", route.z, route.z_stderr, replica=replica)
            writer.emit(f"log_Z_{route_name}", route.log_z, route.log_z_stderr,
                        replica=replica)
            for obs, (val, err) in route.observables.items():
                writer.emit(f"E_{obs}_{route_name}", val, err, replica=replica)
    return EXIT_OK


def cmd_equivalence(cfg, out_dir, replicas, writer):
    spec = OracleSpec(
        n_max=cfg.oracle["n_max"],
        position_nodes=cfg.oracle["position_nodes"],
        bridge_samples=cfg.oracle["bridge_samples"],
        budget=cfg.oracle["budget"],
        kappa=cfg.kappa,
    )
    r_cell = cfg.model.constants.r if cfg.model.constants else 1.0
    worst = 0.0
    for replica in range(replicas):
        res = enumeration_oracle(spec, cfg.model, cfg.params,
                                 stream(cfg.seed, replica, 2),
                                 routes=("fk", "cycle", "mp"), r_cell=r_cell)
        ref = res.route("fk").z
        for route_name, route in res.routes.items():
            writer.emit(f"Z_{route_name}", route.z, route.z_stderr, replica=replica)
        spread = max(abs(r.z - ref) / ref for r in res.routes.values())
        worst = max(worst, spread)
        writer.emit("z_rel_spread", spread, replica=replica)
    return EXIT_OK


def cmd_dlr(cfg, out_dir, replicas, writer):
    lo = cfg.dlr.get("box_lo") or [-cfg.params.L / 4.0] * cfg.params.d
    hi = cfg.dlr.get("box_hi") or [cfg.params.L / 4.0] * cfg.params.d
    spec = DlrSpec(box=(np.array(lo, dtype=float), np.array(hi, dtype=float)),
                   mode=cfg.dlr["mode"], lower_bound=cfg.dlr.get("lower_bound"),
                   mcmc_steps=cfg.dlr["mcmc_steps"])
    for replica in range(replicas):
        rng = stream(cfg.seed, replica, 3)
        state = new_chain_state(cfg.params, cfg.model)
        mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["burn_in"], rng,
                    j_max=cfg.sampler["j_max"])
        diffs = []
        for _ in range(cfg.sampler["n_samples"]):
            mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["thin"], rng,
                        j_max=cfg.sampler["j_max"])
            gamma = cut_rl_to_fk(state.config)
            resampled = dlr_resample(gamma, spec, cfg.model, cfg.params, rng)
            diffs.append(f1(resampled) - f1(gamma))
        _summarize(writer, "dlr_f1_paired_diff", diffs, replica)
    return EXIT_OK


def cmd_invariance(cfg, out_dir, replicas, writer):
    for replica in range(replicas):
        samples = {"plain": [], "shifted": [], "reversed": []}
        for key, name in ((4, "plain"), (5, "shifted"), (6, "reversed")):
            rng = stream(cfg.seed, replica, key)
            state = new_chain_state(cfg.params, cfg.model)
            mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["burn_in"], rng,
                        j_max=cfg.sampler["j_max"])
            for _ in range(cfg.sampler["n_samples"]):
                mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["thin"], rng,
                            j_max=cfg.sampler["j_max"])
                rho = state.config
                if name == "shifted":
                    shift = cfg.params.beta * 7 / cfg.params.steps
                    rho = RlConfig([time_shift(l, shift) for l in rho.loops])
                    gamma = cut_rl_to_fk(rho)
                elif name == "reversed":
                    gamma = time_reverse_config(cut_rl_to_fk(rho))
                else:
                    gamma = cut_rl_to_fk(rho)
                samples[name].append(f1(gamma))
        p_shift = two_sample_test(samples["plain"], samples["shifted"]).pvalue
        p_rev = two_sample_test(samples["plain"], samples["reversed"]).pvalue
        writer.emit("ks_p_time_shift", p_shift, replica=replica)
        writer.emit("ks_p_time_reversal", p_rev, replica=replica)
    return EXIT_OK


def cmd_entropy(cfg, out_dir, replicas, writer):
    if cfg.model.constants is None:
        raise ConfigurationError("entropy check needs a model with certified constants")
    spec = OracleSpec(
        n_max=cfg.oracle["n_max"],
        position_nodes=cfg.oracle["position_nodes"],
        bridge_samples=cfg.oracle["bridge_samples"],
        budget=cfg.oracle["budget"],
        kappa=cfg.kappa,
    )
    for replica in range(replicas):
        oracle = enumeration_oracle(spec, cfg.model, cfg.params,
                                    stream(cfg.seed, replica, 7), routes=("fk",),
                                    r_cell=cfg.model.constants.r)
        route = oracle.route("fk")
        rng = stream(cfg.seed, replica, 8)
        state = new_chain_state(cfg.params, cfg.model)
        mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["burn_in"], rng,
                    j_max=cfg.sampler["j_max"])
        log_dens = []
        for _ in range(cfg.sampler["n_samples"]):
            mh_rl_chain(state, cfg.model, cfg.params, cfg.sampler["thin"], rng,
                        j_max=cfg.sampler["j_max"])
            log_dens.append(log_density_rl(state.config, cfg.model, cfg.params))
        mass = loop_measure_mass(cfg.params)
        rec = relative_entropy_estimate(log_dens, cfg.params, route.log_z,
                                        route.log_z_stderr, mass, seed=cfg.seed)
        bound = entropy_bound_constant(cfg.params, cfg.model.constants)
        writer.emit("relative_entropy_per_volume", rec.value, rec.stderr,
                    rec.n_samples, replica, extra={"bound": bound})
    return EXIT_OK


def cmd_sausage(cfg, out_dir, replicas, writer):
    for replica in range(replicas):
        report = sausage_diagnostics(
            n_paths=2000, delta=0.5, t_total=cfg.params.beta, eps=0.05,
            rng=stream(cfg.seed, replica, 9), d=1, steps=256,
        )
        writer.emit("sausage_violations", report.violations, replica=replica)
        writer.emit("sausage_moment", report.moment, report.moment_stderr,
                    report.n_paths, replica, extra={"half_ratio": report.half_ratio})
    return EXIT_OK


def cmd_verify(cfg, out_dir, replicas, writer):
    results = acceptance.run_all(report=lambda line: print(line, flush=True))
    failed = [r for r in results if not r.passed]
    for r in results:
        writer.emit(f"criterion_{r.number}", 1.0 if r.passed else 0.0,
                    extra={"runtime_s": r.runtime})
    return EXIT_OK if not failed else EXIT_ACCEPTANCE


_COMMANDS = {
    "sample": cmd_sample,
    "oracle": cmd_oracle,
    "equivalence": cmd_equivalence,
    "dlr": cmd_dlr,
    "invariance": cmd_invariance,
    "entropy": cmd_entropy,
    "sausage": cmd_sausage,
    "verify": cmd_verify,
}


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bosegas",
        description="Grand-canonical Bose gas sampling and verification runner",
    )
    parser.add_argument("subcommand_pos", nargs="?", choices=SUBCOMMANDS,
                        metavar="subcommand", help="one of: " + ", ".join(SUBCOMMANDS))
    parser.add_argument("--subcommand", choices=SUBCOMMANDS, default=None)
    parser.add_argument("--config", default=None, help="path to a JSON config")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--replicas", type=int, default=None)
    parser.add_argument("--out", default=".", help="output directory")
    return parser


def _error_record(exc):
    return json.dumps({"error": type(exc).__name__, "message": str(exc)},
                      sort_keys=True)


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    sub = args.subcommand_pos or args.subcommand
    try:
        if sub is None:
            raise ConfigurationError("no subcommand given")
        if args.config:
            cfg = load_config(args.config)
        else:
            cfg = validate_config(default_config_doc())
        seed = args.seed
        if seed is None and os.environ.get("BOSEGAS_SEED"):
            seed = int(os.environ["BOSEGAS_SEED"])
        if seed is not None:
            doc = dict(cfg.raw)
            doc["seed"] = int(seed)
            cfg = validate_config(doc)
        replicas = args.replicas
        if replicas is None and os.environ.get("BOSEGAS_REPLICAS"):
            replicas = int(os.environ["BOSEGAS_REPLICAS"])
        if replicas is None:
            replicas = 1
        if replicas < 1:
            raise ConfigurationError("replicas must be >= 1")
        os.makedirs(args.out, exist_ok=True)
        writer = RecordWriter(os.path.join(args.out, "records.jsonl"),
                              cfg.config_hash, cfg.seed)
        try:
            code = _COMMANDS[sub](cfg, args.out, replicas, writer)
        finally:
            writer.close()
        return code
    except ConfigurationError as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_CONFIG
    except BudgetError as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_BUDGET
    except StructuralError as exc:
        print(_error_record(exc), file=sys.stderr)
        return EXIT_STRUCTURAL


if __name__ == "__main__":
    sys.exit(main())
