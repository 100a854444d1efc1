"""Pinned global maxima of the benchmark functions.

Generated by ``llinbo oracle --write``; do not edit by hand. Values come
from a dense scan (1001^2 grid in 2-D, 2^16 Sobol points otherwise)
refined by compass search and a Nelder-Mead polish.
"""

KNOWN_MAX = {
    "Levy2": {"value": -1.4997597826618576e-32, "argmax": (0.5, 0.5,)},
    "Rastrigin2": {"value": 8.0, "argmax": (0.48828125, 0.48828125,)},
    "Branin2": {"value": -0.39788735772973816, "argmax": (0.12389382295806256, 0.8183333345312248,)},
    "Bukin2": {"value": -0.0002002794426054777, "argmax": (0.25100139721302744, 0.6659997370555673,)},
    "Hartmann4": {"value": 3.7298405844855935, "argmax": (0.1873952718656144, 0.19415152902479677, 0.5579177761000731, 0.26477962430740687,)},
    "Ackley6": {"value": -4.440892098500626e-16, "argmax": (0.0, 0.0, 0.0, 0.0, 0.0, 0.0,)},
}
