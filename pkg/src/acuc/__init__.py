"""AC unit commitment through a sequence of penalized convex relaxations."""

from .case_io import UcInstance, load_case, read_instance, write_instance
from .driver import RunOptions, check, run
from .instance_gen import generate

__all__ = ["UcInstance", "RunOptions", "check", "generate", "load_case", "read_instance",
           "run", "write_instance"]
__version__ = "0.1.0"
