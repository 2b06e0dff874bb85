"""Tiny helper shared by the demos: print a mask as characters."""
import numpy as np

from pphull.raster import UNCERTAIN

_GLYPHS = ".123456789abcdefghijklmnopqrstuvwxyz"


def show(mask, step=2):
    """Print every `step`-th row and column; '?' marks uncertain pixels."""
    for row in np.asarray(mask)[::step, ::step]:
        print("".join("?" if v == UNCERTAIN else _GLYPHS[v % len(_GLYPHS)] for v in row))
