"""Turn a config dataclass into command-line flags."""

from __future__ import annotations

import argparse
import dataclasses
import json


def _parse_list(kind):
    def parse(text: str):
        return tuple(kind(x) for x in text.split(",") if x)

    return parse


def parse_config(cls, description: str, argv=None):
    p = argparse.ArgumentParser(description=description)
    for f in dataclasses.fields(cls):
        default = f.default if f.default is not dataclasses.MISSING else f.default_factory()
        flag = "--" + f.name.replace("_", "-")
        if isinstance(default, tuple):
            kind = type(default[0]) if default else str
            p.add_argument(flag, type=_parse_list(kind), default=default, help=f"comma-separated (default {','.join(map(str, default))})")
        elif isinstance(default, bool):
            p.add_argument(flag, action=argparse.BooleanOptionalAction, default=default)
        else:
            p.add_argument(flag, type=type(default), default=default, help=f"default {default}")
    p.add_argument("--json", default=None, help="also write the results here")
    ns = vars(p.parse_args(argv))
    out = ns.pop("json")
    return cls(**ns), out


def dump(results, path: str | None, cfg) -> None:
    if path:
        with open(path, "w") as fh:
            json.dump({"config": dataclasses.asdict(cfg), "results": results}, fh, indent=2, sort_keys=True)
            fh.write("\n")
