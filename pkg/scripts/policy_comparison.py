"""Base policy alone, with mined preconditions and with ground-truth
preconditions.  Dialog domains report turn F1; the household domain
reports success rate.  All settings share the base policy's random
stream so differences come from verification only."""

from __future__ import annotations

import random
from dataclasses import dataclass

from _config import dump, parse_config
from precond import evalkit as ev
from precond.domains import builtin_schema
from precond.domains.dialog import generate_dialog_corpus
from precond.domains.household import generate_episodes, generate_household_corpus
from precond.mine import conjunctions, mine_all
from precond.policy import Agent, FrequencyPolicy, UniformPolicy
from precond.seeding import derive_seed


@dataclass
class Config:
    domains: tuple = ("restaurants", "buses", "household")
    seed: int = 0
    policy: str = "frequency"
    dialog_demos: int = 10
    household_demos: int = 12
    test: int = 50
    tasks: int = 20
    max_attempts: int = 8
    max_steps: int = 30


def main(argv=None):
    cfg, out = parse_config(Config, __doc__.splitlines()[0], argv)
    results = {}
    for name in cfg.domains:
        s = builtin_schema(name)
        dialog = name != "household"
        if dialog:
            swept = generate_dialog_corpus(s, cfg.dialog_demos, cfg.seed, "demo", 1.0)
            clean = generate_dialog_corpus(s, cfg.dialog_demos, cfg.seed, "demo")
            test = generate_dialog_corpus(s, cfg.test, cfg.seed, "test")
        else:
            swept = generate_household_corpus(s, cfg.household_demos, cfg.seed, "demo", 1.0)
            clean = generate_household_corpus(s, cfg.household_demos, cfg.seed, "demo")
            test = generate_episodes(s, cfg.tasks, cfg.seed, "test")
        base = FrequencyPolicy(s, clean, turn_taking=dialog) if cfg.policy == "frequency" else UniformPolicy(s)
        rows = {}
        for label, pre in (("none", None), ("mined", conjunctions(mine_all(s, swept))), ("gt", s.gt_preconditions())):

            def make(key, pre=pre):
                key = key.id if dialog else key
                return Agent(s, clean, base, pre, cfg.max_attempts, rng=random.Random(derive_seed(cfg.seed, "policy", key)))

            if dialog:
                rows[f"{cfg.policy}+{label}"] = ev.policy_eval_dialog(s, make, test)
            else:
                rows[f"{cfg.policy}+{label}"] = ev.policy_eval_household(s, make, test, cfg.max_steps)
        print(f"== {name}")
        print(ev.policy_table(rows))
        results[name] = {k: m.to_json() for k, m in rows.items()}
    dump(results, out, cfg)


if __name__ == "__main__":
    main()
