"""Mined preconditions against the demonstration-labelled linear
classifier, per domain."""

from __future__ import annotations

from dataclasses import dataclass

from _config import dump, parse_config
from precond import evalkit as ev
from precond.domains import builtin_schema
from precond.domains.dialog import generate_dialog_corpus
from precond.domains.household import generate_household_corpus
from precond.mine import conjunctions, mine_all
from precond.seeding import derive_seed


@dataclass
class Config:
    domains: tuple = ("restaurants", "buses", "household")
    seed: int = 0
    dialog_demos: int = 10
    household_demos: int = 12
    test: int = 50
    sweep: float = 1.0
    epochs: int = 300
    lr: float = 0.5
    l2: float = 1e-4


def main(argv=None):
    cfg, out = parse_config(Config, __doc__.splitlines()[0], argv)
    results = {}
    for name in cfg.domains:
        s = builtin_schema(name)
        if name == "household":
            gen = lambda n, split, sweep=0.0: generate_household_corpus(s, n, cfg.seed, split, sweep)  # noqa: E731
            n = cfg.household_demos
        else:
            gen = lambda n, split, sweep=0.0: generate_dialog_corpus(s, n, cfg.seed, split, sweep)  # noqa: E731
            n = cfg.dialog_demos
        demos, clean, test = gen(n, "demo", cfg.sweep), gen(n, "demo"), gen(cfg.test, "test")
        gt = s.gt_preconditions()
        rows = {"mined": ev.precond_prf(s, conjunctions(mine_all(s, demos)), gt, test)}
        ds = ev.build_labeled_dataset(s, clean, seed=derive_seed(cfg.seed, "labels"))
        clf = ev.train_linear_precond_classifier(s, ds, clean, cfg.epochs, cfg.lr, derive_seed(cfg.seed, "linear"), cfg.l2)
        rows["linear"] = ev.classifier_prf(s, clf, gt, test)
        lp, lr = ev.label_quality(s, ds, clean, gt)
        print(f"== {name}  (label precision {lp:.3f}, label recall {lr:.3f}, {len(ds)} labelled instances)")
        print(ev.precond_table(rows, per_action=False))
        results[name] = {k: m.to_json()["macro"] for k, m in rows.items()} | {"label_quality": [lp, lr]}
    dump(results, out, cfg)


if __name__ == "__main__":
    main()
