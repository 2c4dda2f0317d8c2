"""Bundled example programs."""

from importlib import resources

NAMES = (
    "gamblers_ruin",
    "gamblers_ruin_variant",
    "logistic_map",
    "decay",
    "random_walk",
    "nested_loop",
)


def source(name: str) -> str:
    if name not in NAMES:
        raise KeyError(f"unknown bundled program {name!r}; choose from {', '.join(NAMES)}")
    return resources.files(__name__).joinpath(f"{name}.prob").read_text(encoding="utf-8")
