"""Regenerate the bundled INP networks from the synthetic builders."""

from pathlib import Path

from wdnopt import synthetic
from wdnopt.inp import format_network

DATA = Path(__file__).resolve().parents[1] / "src" / "wdnopt" / "data"


def main():
    nets = {name: synthetic.toy_network(name) for name in synthetic.TOY_SPECS}
    nets["looped_268"] = synthetic.looped_network()
    nets["branched_150"] = synthetic.branched_network()
    DATA.mkdir(parents=True, exist_ok=True)
    for name, model in nets.items():
        (DATA / f"{name}.inp").write_text(format_network(model), encoding="utf-8")
        print(name, model.n_nodes, model.n_links, model.n_sources)


if __name__ == "__main__":
    main()
