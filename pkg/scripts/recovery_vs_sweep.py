"""How many ground-truth preconditions are recovered exactly, as a
function of the affordance sweep rate of the demonstrations.

Without sweeps the demos only show the actions an expert chose, so the
safest (smallest) consistent predicate tends to over-fit those choices.
"""

from __future__ import annotations

import time
from dataclasses import dataclass

from _config import dump, parse_config
from precond import evalkit as ev
from precond.domains import builtin_schema
from precond.domains.dialog import generate_dialog_corpus
from precond.domains.household import generate_household_corpus
from precond.mine import conjunctions, mine_all


@dataclass
class Config:
    domains: tuple = ("restaurants", "buses", "household")
    sweeps: tuple = (0.0, 0.25, 0.5, 1.0)
    seeds: tuple = (0,)
    dialog_demos: int = 10
    household_demos: int = 12
    test: int = 50


def corpora(name: str, cfg: Config, seed: int, sweep: float):
    s = builtin_schema(name)
    if name == "household":
        return s, generate_household_corpus(s, cfg.household_demos, seed, "demo", sweep), generate_household_corpus(s, cfg.test, seed, "test")
    return s, generate_dialog_corpus(s, cfg.dialog_demos, seed, "demo", sweep), generate_dialog_corpus(s, cfg.test, seed, "test")


def main(argv=None):
    cfg, out = parse_config(Config, __doc__.splitlines()[0], argv)
    rows = []
    print(f"{'domain':12s} {'sweep':>5s} {'seed':>4s} {'recovered':>10s} {'prec':>6s} {'rec':>6s} {'secs':>6s}")
    for name in cfg.domains:
        for sweep in cfg.sweeps:
            for seed in cfg.seeds:
                s, demos, test = corpora(name, cfg, seed, sweep)
                t0 = time.perf_counter()
                pred = conjunctions(mine_all(s, demos))
                gt = s.gt_preconditions()
                rec = ev.recovered(s, pred, gt, test)
                m = ev.precond_prf(s, pred, gt, test).macro
                secs = time.perf_counter() - t0
                rows.append({"domain": name, "sweep": sweep, "seed": seed, "recovered": sum(rec.values()), "actions": len(rec),
                             "precision": m.precision, "recall": m.recall})
                print(f"{name:12s} {sweep:5.2f} {seed:4d} {sum(rec.values()):>4d}/{len(rec):<5d} {m.precision:6.3f} {m.recall:6.3f} {secs:6.1f}")
    dump(rows, out, cfg)


if __name__ == "__main__":
    main()
