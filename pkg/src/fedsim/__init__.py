"""fedsim: deterministic discrete-event emulation of a federated multi-cluster cloud."""

from importlib import resources
from pathlib import Path

__version__ = "0.1.0"


def bundled_scenario(name: str) -> Path:
    """Return the filesystem path of a scenario file shipped with the package.

    ``name`` may be given with or without the ``.scenario`` suffix.
    """
    if not name.endswith(".scenario"):
        name = name + ".scenario"
    path = resources.files(__package__).joinpath("scenarios", name)
    return Path(str(path))
