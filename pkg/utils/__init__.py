from .exceptions import *
from .config import *
from .log import *
from .utils import *
from .performance_monitor import *
from .exception_handlers import *
