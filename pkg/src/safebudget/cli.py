"""Command-line front end.

Every run writes ``manifest.json`` next to its outputs; ``replay`` reruns a
manifest and reproduces the same bytes. Exit codes: 0 ok, 2 input error,
3 infeasible start, 4 value iteration not converged.
"""
import argparse
import json
import logging
import os
import sys
import warnings

from . import __version__
from .augmented import build_augmented, trimmed_value_iteration
from .budget import BudgetTable, solve_minimal_budget, unsafe_states
from .errors import Infeasible, NotConvergedWarning, SafeBudgetError
from .kernel_learning import ModelSampler, build_empirical_kernel, is_consistent, required_samples
from .mdp import chain_mdp, load_mdp, random_mdp
from .simulate import expectation_constrained_policy, histogram_csv, run_episodes

log = logging.getLogger("safebudget")

EXIT_OK, EXIT_INPUT, EXIT_INFEASIBLE, EXIT_NOT_CONVERGED = 0, 2, 3, 4

# Settings that never change output bytes and are left out of manifests.
_NON_OUTPUT_KEYS = ("out", "threads", "manifest")


class NotConverged(SafeBudgetError):
    pass


def _common(p):
    p.add_argument("--model", help="path to a JSON model file")
    p.add_argument("--builtin", choices=["chain", "chain-stochastic", "random"])
    p.add_argument("--p-damage", type=float, default=None,
                   help="damage probability of the chain's left action")
    p.add_argument("--n-states", type=int, default=5, help="states of the random builtin")
    p.add_argument("--n-actions", type=int, default=2, help="actions of the random builtin")
    p.add_argument("--delta", type=int, default=5, help="total damage budget")
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--tol", type=float, default=1e-10)
    p.add_argument("--max-iter", type=int, default=10_000)
    p.add_argument("--mu", type=float, default=0.1,
                   help="assumed floor on non-zero transition probabilities (not estimated)")
    p.add_argument("--delta-prob", type=float, default=0.05,
                   help="tolerated probability of an inconsistent kernel estimate")
    p.add_argument("--samples-override", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--episodes", type=int, default=10_000)
    p.add_argument("--max-steps", type=int, default=100_000)
    p.add_argument("--c", type=float, nargs="+", default=None,
                   help="expected-damage bounds for the baseline policy")
    p.add_argument("--return-bin", type=float, default=1)
    p.add_argument("--out", default="out")
    p.add_argument("--threads", type=int, default=1)


def build_parser():
    parser = argparse.ArgumentParser(prog="safebudget", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, help_ in [
        ("validate", "check a model and write its normalized form"),
        ("solve", "compute the minimal budget table"),
        ("learn", "learn the minimal budget from sampled transitions"),
        ("simulate", "solve the trimmed model and roll out the optimal policy"),
        ("experiment1", "chain with certain damage: damage histograms"),
        ("experiment2", "chain with p_damage=0.6: return histograms"),
    ]:
        _common(sub.add_parser(name, help=help_))
    rp = sub.add_parser("replay", help="rerun the configuration stored in a manifest")
    rp.add_argument("manifest")
    rp.add_argument("--out", default="out")
    rp.add_argument("--threads", type=int, default=1)
    return parser


def _dump(obj):
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


class _Run:
    def __init__(self, config):
        self.config = config
        self.out = config["out"]
        os.makedirs(self.out, exist_ok=True)

    def write(self, name, text):
        with open(os.path.join(self.out, name), "w", newline="\n") as fh:
            fh.write(text)

    def manifest(self, extra=None):
        cfg = {k: v for k, v in sorted(self.config.items()) if k not in _NON_OUTPUT_KEYS}
        self.write("manifest.json", _dump({"version": __version__, "seed": cfg["seed"],
                                           "config": cfg, **(extra or {})}))


def _model(cfg):
    if cfg.get("model"):
        return load_mdp(cfg["model"])
    builtin = cfg.get("builtin")
    if builtin == "chain":
        return chain_mdp(1.0 if cfg["p_damage"] is None else cfg["p_damage"])
    if builtin == "chain-stochastic":
        return chain_mdp(0.6 if cfg["p_damage"] is None else cfg["p_damage"])
    if builtin == "random":
        return random_mdp(cfg["n_states"], cfg["n_actions"], cfg["seed"])
    raise SafeBudgetError("one of --model or --builtin is required")


def cmd_validate(cfg, run):
    mdp = _model(cfg)
    run.write("model.json", _dump(mdp.to_dict()))
    print(_dump({"valid": True, "n_states": mdp.n_states, "n_actions": mdp.n_actions,
                 "fingerprint": mdp.fingerprint()}), end="")
    return EXIT_OK


def cmd_solve(cfg, run):
    mdp = _model(cfg)
    k_star = solve_minimal_budget(mdp)
    unsafe = sorted(mdp.states[s] for s in unsafe_states(k_star, cfg["delta"]))
    summary = {"delta": cfg["delta"], "sweeps": k_star.sweeps, "k_max": k_star.k_max,
               "unsafe_states": unsafe, "fingerprint": mdp.fingerprint()}
    run.write("k_star.json", k_star.to_json() + "\n")
    run.write("solve.json", _dump(summary))
    print(_dump({**summary, "k_star": k_star.to_dict()}), end="")
    return EXIT_OK


def cmd_learn(cfg, run):
    mdp = _model(cfg)
    n_req = required_samples(mdp.n_states, mdp.n_actions, cfg["mu"], cfg["delta_prob"])
    n = n_req if cfg["samples_override"] is None else cfg["samples_override"]
    sampler = ModelSampler(mdp)
    kernel = build_empirical_kernel(sampler, mdp.shape, n, cfg["seed"])
    learned = solve_minimal_budget(kernel.surrogate_mdp(mdp.states, mdp.actions, mdp.terminal))
    truth = solve_minimal_budget(mdp)
    consistent = is_consistent(kernel, mdp)
    if not consistent:
        log.warning("empirical kernel is inconsistent with the model; the learned "
                    "table may differ from the true minimal budget")
    summary = {"required_samples": n_req, "samples_used": n, "consistent": consistent,
               "matches_true_k_star": learned == truth}
    run.write("kernel.json", _dump(kernel.to_dict(mdp.states, mdp.actions)))
    run.write("k_star_learned.json", learned.to_json() + "\n")
    run.write("learn.json", _dump(summary))
    print(_dump(summary), end="")
    return EXIT_OK


def _trimmed(cfg, mdp):
    k_star = solve_minimal_budget(mdp)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", NotConvergedWarning)
        return trimmed_value_iteration(build_augmented(mdp, cfg["delta"]), k_star, gamma=cfg["gamma"],
                                       tol=cfg["tol"], max_iter=cfg["max_iter"])


def _stats_files(run, stem, stats):
    run.write(f"{stem}_damage.csv", histogram_csv(stats.damage_histogram))
    run.write(f"{stem}_return.csv", histogram_csv(stats.return_histogram))


def cmd_simulate(cfg, run):
    mdp = _model(cfg)
    res = _trimmed(cfg, mdp)
    run.write("policy.json", _dump(res.policy.to_dict()))
    run.write("values.json", _dump(res.values_dict(mdp.states)))
    stats = run_episodes(mdp, res.policy, cfg["delta"], cfg["episodes"], cfg["seed"],
                         max_steps=cfg["max_steps"], threads=cfg["threads"],
                         return_bin=cfg["return_bin"])
    _stats_files(run, "pi_delta", stats)
    summary = {"converged": res.converged, "iterations": res.iterations,
               "start_value": res.value(mdp.start, cfg["delta"]), "stats": stats.to_dict()}
    run.write("summary.json", _dump(summary))
    print(_dump(summary), end="")
    if not res.converged:
        raise NotConverged(f"value iteration residual {res.residual:.3g} above {cfg['tol']}",
                           residual=res.residual)
    return EXIT_OK


def _experiment(cfg, run, p_default, focus):
    p = p_default if cfg["p_damage"] is None else cfg["p_damage"]
    mdp = chain_mdp(p)
    res = _trimmed(cfg, mdp)
    common = dict(max_steps=cfg["max_steps"], threads=cfg["threads"], return_bin=cfg["return_bin"])
    results = {"pi_delta": run_episodes(mdp, res.policy, cfg["delta"], cfg["episodes"],
                                        cfg["seed"], **common)}
    for c in cfg["c"] or [1.0, 3.0, 5.0, 10.0]:
        policy = expectation_constrained_policy(c, p)
        results[f"pi_c{c:g}"] = run_episodes(mdp, policy, cfg["delta"], cfg["episodes"],
                                             cfg["seed"], **common)
    for name, stats in results.items():
        hist = stats.damage_histogram if focus == "damage" else stats.return_histogram
        run.write(f"{focus}_{name}.csv", histogram_csv(hist))
    summary = {"p_damage": p, "delta": cfg["delta"],
               "policies": {k: v.to_dict() for k, v in results.items()}}
    run.write("summary.json", _dump(summary))
    brief = {k: {"mean_damage": v.mean_damage, "mean_return": v.mean_return,
                 "max_damage": v.max_damage, "min_return": v.min_return}
             for k, v in results.items()}
    print(_dump(brief), end="")
    return EXIT_OK


def cmd_experiment1(cfg, run):
    return _experiment(cfg, run, 1.0, "damage")


def cmd_experiment2(cfg, run):
    return _experiment(cfg, run, 0.6, "return")


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "learn": cmd_learn,
    "simulate": cmd_simulate,
    "experiment1": cmd_experiment1,
    "experiment2": cmd_experiment2,
}


def _load_manifest(args):
    with open(args.manifest) as fh:
        data = json.load(fh)
    cfg = dict(data["config"])
    cfg.update(out=args.out, threads=args.threads)
    return cfg


def _fail(exc):
    payload = exc.to_dict() if isinstance(exc, SafeBudgetError) else {
        "error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload, sort_keys=True, default=str) + "\n")
    if isinstance(exc, Infeasible):
        return EXIT_INFEASIBLE
    if isinstance(exc, NotConverged):
        return EXIT_NOT_CONVERGED
    return EXIT_INPUT


def main(argv=None):
    logging.basicConfig(level=logging.WARNING, format="%(levelname)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        cfg = _load_manifest(args) if args.command == "replay" else vars(args)
        run = _Run(cfg)
        run.manifest()
        return COMMANDS[cfg["command"]](cfg, run)
    except (SafeBudgetError, OSError, json.JSONDecodeError, ValueError, KeyError) as exc:
        return _fail(exc)


if __name__ == "__main__":
    sys.exit(main())
