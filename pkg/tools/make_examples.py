"""Regenerate the bundled project files in src/dissim/data."""

from pathlib import Path

from dissim.cases import case_document, consensus_network, oscillator_ring
from dissim.config import dump_config

DATA = Path(__file__).resolve().parents[1] / "src" / "dissim" / "data"


def main():
    DATA.mkdir(exist_ok=True)
    doc = case_document(
        consensus_network(), "consensus",
        run={"dt": 1e-3, "horizon": 5.0, "trials": 500, "seed": 0},
        description="Nine-node consensus network in three groups, "
                    "abstracted to one state per group.")
    dump_config(doc, DATA / "example1.json")
    doc = case_document(
        oscillator_ring(), "ring", shared=True, bhat=[[0.0], [1.0]],
        run={"dt": 1e-3, "horizon": 5.0, "trials": 500, "seed": 0},
        description="Ring of three groups of ten damped oscillators, "
                    "abstracted to one oscillator per group.")
    dump_config(doc, DATA / "example2.json")


if __name__ == "__main__":
    main()
