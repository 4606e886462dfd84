"""Cost of steering the initial density onto translated terminal densities."""

from __future__ import annotations

from mfgdual import load_config
from mfgdual.mather_lp import MeasureGrid, h_value, translated_terminal


def main() -> None:
    cfg = load_config("lq0")
    spec, data = cfg.hamiltonian(), cfg.problem_data()
    g = MeasureGrid(1.0, 3.0, 32, 32, 16, 2.0)
    # only the shift equal to the integrated supply respects the displacement identity
    for shift, mode in ((1.0, "transport"), (0.7, "sharp"), (1.3, "sharp")):
        h = h_value(g, data, spec, translated_terminal(g, data, shift, mode=mode))
        print(f"shift {shift:.1f} ({mode}): h = {h}")


if __name__ == "__main__":
    main()
