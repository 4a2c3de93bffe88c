from typing import Optional, Tuple
import os
import shutil
import subprocess

from . import __version__

GIT_ENV = {
    "PATH": os.environ["PATH"],
    "HOME": os.environ["HOME"],
    "LANG": "C",
    "LC_ALL": "C",
}


def _git(*args: str) -> Optional[str]:
    try:
        output = subprocess.check_output(["git", *args], stderr=subprocess.DEVNULL, env=GIT_ENV)
    except (subprocess.SubprocessError, OSError):
        return None
    return output.strip().decode("ascii")


def describe() -> Tuple[Optional[str], str]:
    """The exact tag of HEAD, if any, and its abbreviated revision."""
    if not os.path.exists(".git") or not shutil.which("git"):
        return None, "unknown"
    revision = _git("rev-parse", "HEAD")
    return _git("describe", "--exact-match", "--tags"), revision[:8] if revision else "unknown"


git_tag, git_revision = describe()

# Untagged builds carry their revision
if git_tag and __version__ == git_tag[1:].replace("-", ""):
    version = __version__
else:
    base = __version__[: -len("+dev")] if __version__.endswith("+dev") else __version__
    version = f"{base}+dev.{git_revision}"
