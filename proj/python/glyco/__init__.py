from ._glyco import *  # noqa: F401,F403
from ._glyco import __doc__  # noqa: F401
