from .fit import SECTION_MODELING
from .handler import CommandEvent, command_handler, command_handlers
from .ppc import ppc
from .simulate import SECTION_DATA
from .termination import termination
