from .lightdark import LightDark, LightDarkState, make_options
from .minichain import MiniChain, exact_filter_update, exact_solve, obs_probabilities

__all__ = [
    "LightDark",
    "LightDarkState",
    "MiniChain",
    "exact_filter_update",
    "exact_solve",
    "make_options",
    "obs_probabilities",
]
