"""Command-line entry point.

Every command takes one ``--seed``; sub-seeds come from
:func:`precond.seeding.derive_seed`.  Each artifact a command writes carries
the digest of its run manifest (``#manifest <digest>`` in corpus files,
``_meta.manifest`` in JSON reports).  Wall-clock timing goes to a separate
``<out>.run.json`` so that reports stay byte-identical across re-runs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import random
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

from precond import __version__
from precond import expr as ex
from precond import evalkit as ev
from precond.client import ENDPOINT_ENV, CompletionClient, ModelError
from precond.domains import BUILTIN, builtin_schema
from precond.mine import load_report_conjunctions, mine_all, report_json, report_text
from precond.policy import Agent, FrequencyPolicy, ModelPolicy, UniformPolicy
from precond.schema import DomainSchema, SchemaError, dump_schema, load_schema
from precond.seeding import derive_seed
from precond.synth import GeneratorConfig, load_pools
from precond.trajectory import Corpus, CorpusError, parse_corpus, write_corpus

log = logging.getLogger("precond")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------- manifests


def file_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    command: str
    config: dict
    seed: int
    inputs: dict = field(default_factory=dict)  # path -> sha256
    version: str = __version__
    timing: dict = field(default_factory=dict)

    def digest(self) -> str:
        """Hash of everything except timing."""
        body = {k: v for k, v in asdict(self).items() if k != "timing"}
        return hashlib.sha256(json.dumps(body, sort_keys=True, default=str).encode()).hexdigest()[:16]

    def meta(self) -> dict:
        return {"manifest": self.digest(), "command": self.command, "seed": self.seed, "version": self.version}

    def write_run(self, out: Path) -> None:
        data = asdict(self)
        data["digest"] = self.digest()
        out.with_name(out.name + ".run.json").write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")


def _manifest(args, command: str, inputs: list) -> RunManifest:
    skip = {"func", "config", "jobs", "verbose"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    digests = {str(p): file_digest(p) for p in inputs if p and Path(p).is_file()}
    return RunManifest(command, cfg, args.seed, digests)


def write_report(data: dict, text: str, out: Path, man: RunManifest) -> None:
    """``out`` (JSON with ``_meta``) plus the sibling ``.txt`` table."""
    out.parent.mkdir(parents=True, exist_ok=True)
    data = {"_meta": man.meta(), **data}
    out.write_text(json.dumps(data, indent=2, sort_keys=True) + "\n")
    out.with_suffix(".txt").write_text(f"# manifest {man.digest()}\n{text}")


# ---------------------------------------------------------------- inputs


def resolve_schema(ref: str) -> DomainSchema:
    """A built-in domain name or a schema JSON file."""
    if ref in BUILTIN:
        return builtin_schema(ref)
    if not Path(ref).is_file():
        raise ConfigError(f"{ref!r} is neither a built-in domain ({', '.join(BUILTIN)}) nor a schema file")
    return load_schema(ref)


def _schema_inputs(ref: str) -> list:
    return [] if ref in BUILTIN else [ref]


def resolve_preconditions(spec: str, schema: DomainSchema) -> dict | None:
    """``none`` | ``gt`` | ``mined:<report.json>``."""
    if spec == "none":
        return None
    if spec == "gt":
        return schema.gt_preconditions()
    if spec.startswith("mined:"):
        path = spec[len("mined:") :]
        return load_report_conjunctions(json.loads(Path(path).read_text()), schema)
    raise ConfigError(f"bad --precond value {spec!r}; expected none, gt or mined:<report>")


def _pred_spec(ref: str) -> str:
    """A bare path means a mining report."""
    return ref if ref in ("none", "gt") or ref.startswith("mined:") else f"mined:{ref}"


def _precond_inputs(specs) -> list:
    return [s[len("mined:") :] for s in specs if s.startswith("mined:")]


def save_episodes(episodes, path: Path) -> None:
    rows = [{"world": w.to_json(), "task": asdict(t)} for w, t in episodes]
    path.write_text(json.dumps(rows, indent=2, sort_keys=True) + "\n")


def load_episodes(path: str | Path):
    from precond.domains.household import Task, WorldState

    rows = json.loads(Path(path).read_text())
    return [(WorldState.from_json(r["world"]), Task(**r["task"])) for r in rows]


def _endpoint(args) -> str | None:
    return getattr(args, "endpoint", None) or os.environ.get(ENDPOINT_ENV)


# ---------------------------------------------------------------- commands


def cmd_export_schema(args) -> int:
    schema = resolve_schema(args.domain)
    text = dump_schema(schema)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_gen_demos(args) -> int:
    if args.demos < 1:
        raise ConfigError("--demos must be >= 1")
    if args.test < 0:
        raise ConfigError("--test must be >= 0")
    if not 0.0 <= args.sweep <= 1.0:
        raise ConfigError("--sweep must be in [0, 1]")
    schema = resolve_schema(args.domain)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    man = _manifest(args, "gen-demos", _schema_inputs(args.domain))
    t0 = time.perf_counter()
    header = (f"#manifest {man.digest()}",)
    if schema.name == "household":
        from precond.domains.household import expert_corpus, generate_episodes

        demo_eps = generate_episodes(schema, args.demos, args.seed, "demo")
        write_corpus(expert_corpus(schema, demo_eps, args.seed, "demo", args.sweep), out / "demos.traj", header)
        write_corpus(expert_corpus(schema, demo_eps, args.seed, "demo"), out / "demos_clean.traj", header)
        test_eps = generate_episodes(schema, args.test, args.seed, "test")
        write_corpus(expert_corpus(schema, test_eps, args.seed, "test"), out / "test.traj", header)
        save_episodes(test_eps, out / "test_episodes.json")
    elif schema.name in ("restaurants", "buses"):
        from precond.domains.dialog import generate_dialog_corpus

        demos = generate_dialog_corpus(schema, args.demos, args.seed, "demo", args.sweep, args.noise)
        write_corpus(demos, out / "demos.traj", header)
        clean = generate_dialog_corpus(schema, args.demos, args.seed, "demo", 0.0, args.noise)
        write_corpus(clean, out / "demos_clean.traj", header)
        test = generate_dialog_corpus(schema, args.test, args.seed, "test", 0.0, args.noise)
        write_corpus(test, out / "test.traj", header)
    else:
        raise ConfigError(f"no demonstration generator for schema {schema.name!r}")
    man.timing["seconds"] = round(time.perf_counter() - t0, 3)
    man.write_run(out / "demos.traj")
    print(f"wrote {out}/demos.traj, demos_clean.traj, test.traj")
    return 0


def _mine_one(job):
    schema, demos, cfg, generator, pools, action = job
    return mine_all(schema, demos, cfg, generator, pools, actions=[action])


def cmd_mine(args) -> int:
    schema = resolve_schema(args.schema)
    demos = parse_corpus(args.demos, schema)
    endpoint = _endpoint(args)
    if args.generator == "model" and not endpoint:
        raise ConfigError(f"--generator model needs --endpoint or ${ENDPOINT_ENV}")
    cfg = GeneratorConfig(max_depth=args.max_depth, max_pool=args.max_pool, model_endpoint=endpoint)
    pools = load_pools(args.pools, schema) if args.pools else None
    actions = args.actions.split(",") if args.actions else [f.name for f in schema.actions]
    for a in actions:
        schema.function(a)  # unknown action names fail here
    man = _manifest(args, "mine", [args.demos, args.pools, *_schema_inputs(args.schema)])
    t0 = time.perf_counter()
    if args.jobs > 1 and args.generator == "enumerate":
        jobs = [(schema, demos, cfg, args.generator, pools, a) for a in actions]
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = {}
            for part in pool.map(_mine_one, jobs):
                results.update(part)
    else:
        results = mine_all(schema, demos, cfg, args.generator, pools, actions=actions)
    man.timing["seconds"] = round(time.perf_counter() - t0, 3)
    out = Path(args.out)
    data = report_json(results)
    if args.generator == "model":
        data["_nondeterministic"] = "candidates sampled from an external model"
    write_report(data, report_text(results), out, man)
    man.write_run(out)
    print(f"wrote {out}")
    return 0


def cmd_eval_preconds(args) -> int:
    schema = resolve_schema(args.schema)
    test = parse_corpus(args.test, schema)
    gt = resolve_preconditions(args.gt if args.gt != "builtin" else "gt", schema)
    if gt is None:
        raise ConfigError("--gt must be 'builtin' or mined:<report>")
    rows, extra = {}, {}
    specs = [_pred_spec(x) for x in args.pred]
    inputs = [args.test, *_schema_inputs(args.schema), *_precond_inputs(specs)]
    for raw, spec in zip(args.pred, specs):
        pred = resolve_preconditions(spec, schema) or {}
        # actions the report does not mention are unconstrained
        rows[raw] = ev.precond_prf(schema, {a: pred.get(a, ex.TRUE) for a in gt}, gt, test)
    if args.linear_demos:
        demos = parse_corpus(args.linear_demos, schema)
        inputs.append(args.linear_demos)
        ds = ev.build_labeled_dataset(schema, demos, seed=derive_seed(args.seed, "labels"))
        clf = ev.train_linear_precond_classifier(schema, ds, demos, seed=derive_seed(args.seed, "linear"))
        rows["linear"] = ev.classifier_prf(schema, clf, gt, test)
        X, y = ev.dataset_matrix(schema, ds, demos, clf.features)
        lp, lr = ev.label_quality(schema, ds, demos, gt)
        extra["_linear"] = {
            "instances": len(ds),
            "label_precision": lp,
            "label_recall": lr,
            "final_loss": clf.losses[-1],
            "gradient_check": ev.gradient_check(clf.w, clf.b, X, y, clf.l2),
        }
    man = _manifest(args, "eval-preconds", inputs)
    out = Path(args.out)
    data = {k: m.to_json() for k, m in rows.items()}
    data.update(extra)
    write_report(data, ev.precond_table(rows, not args.macro_only), out, man)
    print(ev.precond_table(rows, per_action=False), end="")
    return 0


def _base_policy(args, schema: DomainSchema, demos: Corpus):
    dialog = schema.name != "household"
    if args.policy == "frequency":
        return FrequencyPolicy(schema, demos, k=args.ngram, turn_taking=dialog)
    if args.policy == "uniform":
        return UniformPolicy(schema)
    endpoint = _endpoint(args)
    if not endpoint:
        raise ConfigError(f"--policy model needs --endpoint or ${ENDPOINT_ENV}")
    return ModelPolicy(CompletionClient(endpoint))


def _agent_factory(args, schema, demos, base, pre):
    def make(key) -> Agent:
        return Agent(
            schema,
            demos,
            base,
            pre,
            max_attempts=args.max_attempts,
            verify=pre is not None,
            include_preconditions_in_prompt=args.precond_prompt == "on",
            rng=random.Random(derive_seed(args.seed, "policy", key)),
        )

    return make


def _evaluate(args, schema, demos, base, pre, test):
    make = _agent_factory(args, schema, demos, base, pre)
    if schema.name == "household":
        return ev.policy_eval_household(schema, make, test, args.max_steps)
    return ev.policy_eval_dialog(schema, lambda traj: make(traj.id), test)


def _load_test(args, schema):
    if schema.name == "household":
        return load_episodes(args.test)
    return parse_corpus(args.test, schema)


def cmd_eval_policy(args) -> int:
    schema = resolve_schema(args.schema)
    demos = parse_corpus(args.demos, schema)
    test = _load_test(args, schema)
    base = _base_policy(args, schema, demos)
    specs = args.precond or ["none"]
    rows = {}
    for spec in specs:
        rows[f"{args.policy}+{spec}"] = _evaluate(args, schema, demos, base, resolve_preconditions(spec, schema), test)
    data = {k: m.to_json() for k, m in rows.items()}
    data["_settings"] = {"max_attempts": args.max_attempts, "precond_prompt": args.precond_prompt}
    text = ev.policy_table(rows)
    if len(specs) > 1:
        first = rows[f"{args.policy}+{specs[0]}"]
        deltas = {k: m.compatibility - first.compatibility for k, m in rows.items()}
        data["_compatibility_delta"] = {k: round(v, 6) for k, v in deltas.items()}
        text += "".join(f"compatibility delta {k} vs {specs[0]}: {v:+.3f}\n" for k, v in deltas.items())
    if args.policy == "model":
        data["_nondeterministic"] = "predictions sampled from an external model"
    man = _manifest(args, "eval-policy", [args.demos, args.test, *_precond_inputs(specs), *_schema_inputs(args.schema)])
    out = Path(args.out)
    write_report(data, text, out, man)
    print(text, end="")
    return 0


def cmd_run_policy(args) -> int:
    """Roll out one test item and log every decision."""
    schema = resolve_schema(args.schema)
    demos = parse_corpus(args.demos, schema)
    test = _load_test(args, schema)
    base = _base_policy(args, schema, demos)
    pre = resolve_preconditions(args.precond, schema)
    gt = schema.gt_preconditions()
    if not 0 <= args.index < len(test):
        raise ConfigError(f"--index must be in [0, {len(test)})")
    make = _agent_factory(args, schema, demos, base, pre)
    steps = []
    if schema.name == "household":
        from precond.domains.household import simulate

        world, task = test[args.index]
        agent = make(args.index)
        res = simulate(schema, world, task, agent, args.max_steps, traj_id=f"ep{args.index:03d}")
        proposals = [s for s in res.steps if s.call is not None]
        for s, r in zip(proposals, agent.log):
            steps.append(_step_row(s.step, r, s.compatible))
        summary = {"goal": task.goal, "success": res.success}
    else:
        from precond.execute import replay
        from precond.policy import verify
        from precond.trajectory import Trajectory

        traj = list(test)[args.index]
        agent = make(traj.id)
        for start, end in ev.system_turns(traj):
            prefix = Trajectory(traj.id, traj.calls[:start])
            for _ in range(end - start + 2):
                r = agent.act(prefix)
                ok = verify(schema, replay(schema, prefix), r.call, gt)
                steps.append(_step_row(start, r, ok))
                if r.call is None:
                    break
                prefix = Trajectory(traj.id, prefix.calls + (r.call,))
        summary = {"trajectory": traj.id}
    man = _manifest(args, "run-policy", [args.demos, args.test, *_precond_inputs([args.precond]), *_schema_inputs(args.schema)])
    out = Path(args.out)
    text = "".join(
        f"{s['step']:4d} {s['call']:50s} verified={s['verified']!s:5s} attempts={s['attempts']} "
        f"fallback={s['fallback_used']!s:5s} compatible={s['compatible']}\n"
        for s in steps
    )
    write_report({"summary": summary, "steps": steps, "max_attempts": args.max_attempts}, text, out, man)
    print(text, end="")
    return 0


def _step_row(step: int, r, compatible: bool) -> dict:
    return {
        "step": step,
        "call": "<eot>" if r.call is None else r.call.render(),
        "verified": r.verified,
        "attempts": r.attempts,
        "fallback_used": r.fallback_used,
        "compatible": bool(compatible),
    }


# ---------------------------------------------------------------- parser


def _policy_flags(p: argparse.ArgumentParser, multi: bool) -> None:
    p.add_argument("schema", help="built-in domain name or schema file")
    p.add_argument("--demos", required=True, help="demonstration corpus used by the base policy")
    p.add_argument("--test", required=True, help="test corpus (dialogs) or episodes JSON (household)")
    p.add_argument("--policy", choices=("frequency", "uniform", "model"), default="frequency")
    p.add_argument("--ngram", type=int, default=2)
    p.add_argument("--max-attempts", type=int, default=8)
    if multi:
        p.add_argument("--precond", action="append", help="none | gt | mined:<report>; repeat to compare")
    else:
        p.add_argument("--precond", default="none", help="none | gt | mined:<report>")
    p.add_argument("--precond-prompt", choices=("on", "off"), default="off")
    p.add_argument("--max-steps", type=int, default=30)
    p.add_argument("--endpoint", default=None)
    p.add_argument("--out", required=True)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="precond", description="Mine and use action preconditions.")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--jobs", type=int, default=1)
    parser.add_argument("--config", default=None, help="JSON file of default option values")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export-schema", help="write a built-in schema as JSON")
    p.add_argument("domain")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_export_schema)

    p = sub.add_parser("gen-demos", help="generate demonstration and test corpora")
    p.add_argument("domain")
    p.add_argument("--demos", type=int, default=10)
    p.add_argument("--test", type=int, default=50)
    p.add_argument("--sweep", type=float, default=1.0, help="affordance sweep rate for the mining demos")
    p.add_argument("--noise", type=float, default=0.0, help="user digression rate (dialogs)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_gen_demos)

    p = sub.add_parser("mine", help="mine preconditions from demonstrations")
    p.add_argument("schema")
    p.add_argument("demos")
    p.add_argument("--generator", choices=("enumerate", "model"), default="enumerate")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--pools", default=None, help="candidate pool JSON (skips generation)")
    p.add_argument("--max-depth", type=int, default=2)
    p.add_argument("--max-pool", type=int, default=20000)
    p.add_argument("--actions", default=None, help="comma-separated subset")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_mine)

    p = sub.add_parser("eval-preconds", help="precision / recall of preconditions")
    p.add_argument("schema")
    p.add_argument("--test", required=True)
    p.add_argument("--pred", action="append", required=True, help="mining report, gt, none or mined:<report>")
    p.add_argument("--gt", default="builtin")
    p.add_argument("--linear-demos", default=None, help="also train the linear baseline on this corpus")
    p.add_argument("--macro-only", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_eval_preconds)

    p = sub.add_parser("eval-policy", help="F1 / SR / compatibility of a policy")
    _policy_flags(p, multi=True)
    p.set_defaults(func=cmd_eval_policy)

    p = sub.add_parser("run-policy", help="log every sampling decision for one test item")
    _policy_flags(p, multi=False)
    p.add_argument("--index", type=int, default=0)
    p.set_defaults(func=cmd_run_policy)
    return parser


def parse_args(argv=None) -> argparse.Namespace:
    parser = build_parser()
    pre, _ = parser.parse_known_args(argv)
    if pre.config:
        try:
            defaults = json.loads(Path(pre.config).read_text())
        except (OSError, ValueError) as exc:
            parser.error(f"cannot read config {pre.config}: {exc}")
        if not isinstance(defaults, dict):
            parser.error("config file must hold a JSON object")
        defaults = {k.replace("-", "_"): v for k, v in defaults.items()}
        parser.set_defaults(**defaults)
        for action in parser._subparsers._group_actions:
            for sp in action.choices.values():
                sp.set_defaults(**{k: v for k, v in defaults.items() if any(a.dest == k for a in sp._actions)})
    return parser.parse_args(argv)


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ModelError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (CorpusError, SchemaError, KeyError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
